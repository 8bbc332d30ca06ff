//! Monte Carlo estimation of stationary queue functionals by
//! uniformization, sampling the OU process exactly at event epochs.
//!
//! Streams: replication `r` uses `ChaCha8Rng::seed_from_u64(seed)` with
//! `set_stream(r)`.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{phi, ModelParams};
use crate::oracle::Modulator;

/// Exact OU transition over a step `h >= 0`.
pub fn ou_step<R: Rng + ?Sized>(x: f64, h: f64, p: &ModelParams, rng: &mut R) -> f64 {
    if h == 0.0 {
        return x;
    }
    let decay = (-p.alpha * h).exp();
    let var = p.sigma * p.sigma * (-(-2.0 * p.alpha * h).exp_m1()) / (2.0 * p.alpha);
    let z: f64 = StandardNormal.sample(rng);
    p.m + (x - p.m) * decay + var.sqrt() * z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub total_events: u64,
    pub burn_in_events: u64,
    /// Batches per replication.
    pub batches: usize,
    pub replications: usize,
    pub seed: u64,
    pub u_grid: Vec<f64>,
    /// Report `P(L = j)` for `j <= j_report`.
    pub j_report: usize,
    pub modulator: Modulator,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            total_events: 10_000_000,
            burn_in_events: 1_000_000,
            batches: 30,
            replications: 1,
            seed: 1,
            u_grid: vec![0.0, 0.3, 0.5, 0.6, 0.9],
            j_report: 10,
            modulator: Modulator::Clamped,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParam { name, reason });
        if self.batches < 10 {
            return bad("batches", format!("need at least 10 batches, got {}", self.batches));
        }
        if self.replications == 0 {
            return bad("replications", "need at least one replication".into());
        }
        if self.burn_in_events >= self.total_events {
            return bad("burn_in_events", "must be smaller than total_events".into());
        }
        let per_rep = (self.total_events - self.burn_in_events) / self.replications as u64;
        if per_rep < self.batches as u64 {
            return bad("total_events", "fewer events than batches per replication".into());
        }
        if self.u_grid.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return bad("u_grid", "points must lie in [0, 1]".into());
        }
        if self.modulator != Modulator::Clamped {
            return Err(Error::UnboundedModulator);
        }
        Ok(())
    }

    /// Same settings with a different total event count and proportional
    /// burn-in.
    pub fn with_events(&self, total: u64) -> Self {
        let share = self.burn_in_events as f64 / self.total_events as f64;
        Self {
            total_events: total,
            burn_in_events: (share * total as f64) as u64,
            ..self.clone()
        }
    }
}

/// Time-weighted sums over one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub replication: usize,
    pub batch: usize,
    pub time: f64,
    pub gen_fn: Vec<f64>,
    pub mean_queue: f64,
    pub queue_probs: Vec<f64>,
    /// `mu phi(X) 1{L > 0}` averaged over uniformization epochs.
    pub service_flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub u_grid: Vec<f64>,
    pub gen_fn: Vec<f64>,
    pub gen_fn_se: Vec<f64>,
    pub mean_queue: f64,
    pub mean_queue_se: f64,
    pub queue_probs: Vec<f64>,
    pub queue_probs_se: Vec<f64>,
    pub service_flow: f64,
    pub service_flow_se: f64,
    pub events: u64,
    pub seed: u64,
    pub batches: Vec<BatchRecord>,
}

/// Estimate plus the run time, which is kept out of the deterministic part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub estimate: SimEstimate,
    pub wall_clock_secs: f64,
}

fn stream(seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

fn uniformization_rate(p: &ModelParams) -> f64 {
    p.lambda + p.mu * (1.0 + p.b)
}

/// Shared event driver. `queues` holds one queue length per modulator
/// strength, all advanced with the same random numbers; `observe` receives
/// `(epoch index after burn-in, dt, x, queues)` before each event is applied,
/// so `queues` is the state held over the elapsed `dt`.
fn drive<F>(p: &ModelParams, eps: &[f64], events: u64, burn_in: u64, rng: &mut ChaCha8Rng, mut observe: F)
where
    F: FnMut(u64, f64, f64, &[usize]),
{
    let big = uniformization_rate(p);
    let clock = Exp::new(big).expect("positive rate");
    let z0: f64 = StandardNormal.sample(rng);
    let mut x = p.m + p.stationary_sd() * z0;
    let mut queues = vec![0usize; eps.len()];
    let params: Vec<ModelParams> = eps.iter().map(|&e| p.with_epsilon(e)).collect();
    for k in 0..events {
        let dt: f64 = clock.sample(rng);
        x = ou_step(x, dt, p, rng);
        if k >= burn_in {
            observe(k - burn_in, dt, x, &queues);
        }
        let v = rng.gen::<f64>() * big;
        for (q, pe) in queues.iter_mut().zip(&params) {
            if v < p.lambda {
                *q += 1;
            } else if *q > 0 && v < p.lambda + p.mu * phi(pe, x) {
                *q -= 1;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Acc {
    time: f64,
    gen_fn: Vec<f64>,
    queue: f64,
    probs: Vec<f64>,
    flow: f64,
    epochs: f64,
}

impl Acc {
    fn new(nu: usize, nj: usize) -> Self {
        Self {
            time: 0.0,
            gen_fn: vec![0.0; nu],
            queue: 0.0,
            probs: vec![0.0; nj],
            flow: 0.0,
            epochs: 0.0,
        }
    }
}

fn run_replication(p: &ModelParams, cfg: &SimConfig, rep: usize) -> Vec<BatchRecord> {
    let reps = cfg.replications as u64;
    let events = cfg.total_events / reps;
    let burn_in = cfg.burn_in_events / reps;
    let per_batch = (events - burn_in) / cfg.batches as u64;
    let mut rng = stream(cfg.seed, rep);
    let nu = cfg.u_grid.len();
    let nj = cfg.j_report + 1;
    let mut accs = vec![Acc::new(nu, nj); cfg.batches];
    drive(
        p,
        &[p.epsilon],
        burn_in + per_batch * cfg.batches as u64,
        burn_in,
        &mut rng,
        |k, dt, x, q| {
            let b = ((k / per_batch) as usize).min(cfg.batches - 1);
            let a = &mut accs[b];
            let l = q[0];
            a.time += dt;
            for (g, &u) in a.gen_fn.iter_mut().zip(&cfg.u_grid) {
                *g += dt * u.powi(l as i32);
            }
            a.queue += dt * l as f64;
            if l < nj {
                a.probs[l] += dt;
            }
            if l > 0 {
                a.flow += p.mu * phi(p, x);
            }
            a.epochs += 1.0;
        },
    );
    accs.into_iter()
        .enumerate()
        .map(|(b, a)| BatchRecord {
            replication: rep,
            batch: b,
            time: a.time,
            gen_fn: a.gen_fn.iter().map(|g| g / a.time).collect(),
            mean_queue: a.queue / a.time,
            queue_probs: a.probs.iter().map(|v| v / a.time).collect(),
            service_flow: a.flow / a.epochs,
        })
        .collect()
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn column(batches: &[BatchRecord], f: impl Fn(&BatchRecord) -> f64) -> Vec<f64> {
    batches.iter().map(f).collect()
}

pub fn run(p: &ModelParams, cfg: &SimConfig) -> Result<SimReport> {
    p.validate()?;
    cfg.validate()?;
    let start = Instant::now();
    let batches: Vec<BatchRecord> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(p, cfg, r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let total_time: f64 = batches.iter().map(|b| b.time).sum();
    let weighted = |f: &dyn Fn(&BatchRecord) -> f64| batches.iter().map(|b| f(b) * b.time).sum::<f64>() / total_time;
    let se = |f: &dyn Fn(&BatchRecord) -> f64| mean_se(&column(&batches, f)).1;
    let nu = cfg.u_grid.len();
    let nj = cfg.j_report + 1;
    let (service_flow, service_flow_se) = mean_se(&column(&batches, |b| b.service_flow));
    let estimate = SimEstimate {
        u_grid: cfg.u_grid.clone(),
        gen_fn: (0..nu).map(|k| weighted(&|b| b.gen_fn[k])).collect(),
        gen_fn_se: (0..nu).map(|k| se(&|b| b.gen_fn[k])).collect(),
        mean_queue: weighted(&|b| b.mean_queue),
        mean_queue_se: se(&|b| b.mean_queue),
        queue_probs: (0..nj).map(|j| weighted(&|b| b.queue_probs[j])).collect(),
        queue_probs_se: (0..nj).map(|j| se(&|b| b.queue_probs[j])).collect(),
        service_flow,
        service_flow_se,
        events: cfg.total_events,
        seed: cfg.seed,
        batches,
    };
    Ok(SimReport {
        estimate,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn batches_to_csv(est: &SimEstimate) -> String {
    let mut s = String::from("replication,batch,time,mean_queue,service_flow");
    for u in &est.u_grid {
        s.push_str(&format!(",gen_fn_u{u}"));
    }
    s.push('\n');
    for b in &est.batches {
        s.push_str(&format!(
            "{},{},{:e},{:e},{:e}",
            b.replication, b.batch, b.time, b.mean_queue, b.service_flow
        ));
        for g in &b.gen_fn {
            s.push_str(&format!(",{g:e}"));
        }
        s.push('\n');
    }
    s
}

/// Slope of `E[u^L]` in `eps` from runs sharing all random numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub u_grid: Vec<f64>,
    pub eps_list: Vec<f64>,
    /// `E[u^L](eps_k)` per `u` (rows) and `eps` (columns).
    pub gen_fn: Vec<Vec<f64>>,
    pub slope: Vec<f64>,
    pub slope_se: Vec<f64>,
    /// Quadratic coefficient when it is fitted, else 0.
    pub curvature: Vec<f64>,
    pub theory: Vec<f64>,
    /// `(slope - theory) / slope_se`.
    pub z_score: Vec<f64>,
    pub events: u64,
}

/// Least-squares fit of `d(eps)` by `s eps + q eps^2` (or `s eps` with a
/// single point), returning `s` and `q`.
fn fit_slope(eps: &[f64], d: &[f64]) -> (f64, f64) {
    if eps.len() == 1 {
        return (d[0] / eps[0], 0.0);
    }
    let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&e, &v) in eps.iter().zip(d) {
        s11 += e * e;
        s12 += e * e * e;
        s22 += e * e * e * e;
        b1 += e * v;
        b2 += e * e * v;
    }
    let det = s11 * s22 - s12 * s12;
    ((b1 * s22 - b2 * s12) / det, (s11 * b2 - s12 * b1) / det)
}

pub fn rsr_slope_experiment(p: &ModelParams, cfg: &SimConfig, eps_list: &[f64]) -> Result<SlopeEstimate> {
    p.validate()?;
    cfg.validate()?;
    let mut eps: Vec<f64> = eps_list.iter().copied().filter(|&e| e != 0.0).collect();
    if eps.is_empty() || eps_list.len() < 2 {
        return Err(Error::InvalidParam {
            name: "eps_list",
            reason: "need at least two epsilon values including a nonzero one".into(),
        });
    }
    for &e in &eps {
        p.with_epsilon(e).validate()?;
    }
    eps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut all = vec![0.0];
    all.extend(&eps);
    let nu = cfg.u_grid.len();
    let ne = all.len();
    let reps = cfg.replications as u64;
    let events = cfg.total_events / reps;
    let burn_in = cfg.burn_in_events / reps;
    let per_batch = (events - burn_in) / cfg.batches as u64;
    // per replication: batches x eps x u time-weighted sums, plus batch time
    type RepSums = (Vec<Vec<Vec<f64>>>, Vec<f64>);
    let per_rep: Vec<RepSums> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(cfg.seed, r);
            let mut sums = vec![vec![vec![0.0; nu]; ne]; cfg.batches];
            let mut times = vec![0.0; cfg.batches];
            drive(
                p,
                &all,
                burn_in + per_batch * cfg.batches as u64,
                burn_in,
                &mut rng,
                |k, dt, _x, q| {
                    let b = ((k / per_batch) as usize).min(cfg.batches - 1);
                    times[b] += dt;
                    for (e, &l) in q.iter().enumerate() {
                        for (g, &u) in sums[b][e].iter_mut().zip(&cfg.u_grid) {
                            *g += dt * u.powi(l as i32);
                        }
                    }
                },
            );
            (sums, times)
        })
        .collect();
    let mut batch_vals: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut batch_times = Vec::new();
    for (sums, times) in per_rep {
        for (s, t) in sums.into_iter().zip(times) {
            batch_vals.push(
                s.into_iter()
                    .map(|row| row.into_iter().map(|v| v / t).collect())
                    .collect(),
            );
            batch_times.push(t);
        }
    }
    let total: f64 = batch_times.iter().sum();
    let rho = p.rho();
    let mut out = SlopeEstimate {
        u_grid: cfg.u_grid.clone(),
        eps_list: all.clone(),
        gen_fn: vec![vec![0.0; ne]; nu],
        slope: vec![0.0; nu],
        slope_se: vec![0.0; nu],
        curvature: vec![0.0; nu],
        theory: vec![0.0; nu],
        z_score: vec![0.0; nu],
        events: cfg.total_events,
    };
    for (k, &u) in cfg.u_grid.iter().enumerate() {
        for e in 0..ne {
            out.gen_fn[k][e] = batch_vals
                .iter()
                .zip(&batch_times)
                .map(|(v, t)| v[e][k] * t)
                .sum::<f64>()
                / total;
        }
        let diffs: Vec<f64> = (1..ne).map(|e| out.gen_fn[k][e] - out.gen_fn[k][0]).collect();
        let (s, q) = fit_slope(&eps, &diffs);
        let batch_slopes: Vec<f64> = batch_vals
            .iter()
            .map(|v| {
                let d: Vec<f64> = (1..ne).map(|e| v[e][k] - v[0][k]).collect();
                fit_slope(&eps, &d).0
            })
            .collect();
        out.slope[k] = s;
        out.curvature[k] = q;
        out.slope_se[k] = mean_se(&batch_slopes).1;
        out.theory[k] = -rho * (1.0 - u) * p.m / (1.0 - rho * u).powi(2);
        out.z_score[k] = (s - out.theory[k]) / out.slope_se[k];
    }
    Ok(out)
}
