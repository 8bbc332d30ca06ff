//! First-order approximation, reduced-rate reference queue and the error
//! bound `E_B` with its ingredients.

use libm::erfc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{c0_conv_norm, theta_norm_upper};
use crate::model::ModelParams;

pub const DEFAULT_J_MAX: usize = 20;
/// Tail of the kappa series must stay below this share of the sum.
pub const KAPPA_TAIL_SHARE: f64 = 0.01;

/// `(1 - rho) / (1 - rho u) - rho (1 - u) m eps / (1 - rho u)^2`.
pub fn rsr_first_order(p: &ModelParams, u: f64) -> f64 {
    let rho = p.rho();
    let d = 1.0 - rho * u;
    (1.0 - rho) / d - rho * (1.0 - u) * p.m * p.epsilon / (d * d)
}

/// Largest `eps` keeping the reduced-rate queue stable, `(1 - rho) / m`.
pub fn reduced_rate_threshold(p: &ModelParams) -> f64 {
    if p.m > 0.0 {
        (1.0 - p.rho()) / p.m
    } else {
        f64::INFINITY
    }
}

fn check_reduced_rate(p: &ModelParams) -> Result<()> {
    let threshold = reduced_rate_threshold(p);
    if p.epsilon >= threshold {
        return Err(Error::ReducedRateUnstable {
            epsilon: p.epsilon,
            threshold,
        });
    }
    Ok(())
}

/// Generating function of an M/M/1 queue with service rate `mu (1 - m eps)`.
pub fn reduced_rate_gen_fn(p: &ModelParams, u: f64) -> Result<f64> {
    check_reduced_rate(p)?;
    let r = p.rho() / (1.0 - p.m * p.epsilon);
    Ok((1.0 - r) / (1.0 - r * u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedRateRemainder {
    /// `reduced_rate_gen_fn - rsr_first_order`, computed directly.
    pub direct: f64,
    /// `rho (1 - u) m^2 eps^2 / ((1 - rho - m eps) (1 - rho)^2)`.
    pub bound_form: f64,
}

pub fn reduced_rate_remainder(p: &ModelParams, u: f64) -> Result<ReducedRateRemainder> {
    let direct = reduced_rate_gen_fn(p, u)? - rsr_first_order(p, u);
    let rho = p.rho();
    let bound_form = rho * (1.0 - u) * (p.m * p.epsilon).powi(2) / ((1.0 - rho - p.m * p.epsilon) * (1.0 - rho).powi(2));
    Ok(ReducedRateRemainder { direct, bound_form })
}

fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `ln J2(t)` with `J2(t) = int_t^inf (z - t)^2 phi(z) dz`.
pub fn ln_j2(t: f64) -> f64 {
    if t > 8.0 {
        // J2 = phi(t) K(t), K(t) = sum_n (-1)^{n+1} 2n (2n-1)!! / t^{2n+1}
        let t2 = t * t;
        let mut term = 2.0 / (t2 * t);
        let mut k = term;
        for n in 2..40 {
            let nf = n as f64;
            let next = -term * nf * (2.0 * nf - 1.0) / ((nf - 1.0) * t2);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            k += term;
        }
        -0.5 * t2 - 0.5 * (2.0 * std::f64::consts::PI).ln() + k.ln()
    } else {
        let tail = 0.5 * erfc(t / std::f64::consts::SQRT_2);
        ((1.0 + t * t) * tail - t * std_normal_pdf(t)).ln()
    }
}

/// Ingredients of `D(eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DBreakdown {
    pub d_eps: f64,
    /// `ln D(eps)`, finite even where `d_eps` underflows.
    pub ln_d_eps: f64,
    pub delta_eps: f64,
    pub m_const: f64,
    /// `E[(eps X - a)^2; eps X > a]`.
    pub clamp_tail_upper: f64,
    /// `E[(eps X + b)^2; eps X < -b]`.
    pub clamp_tail_lower: f64,
    pub underflow: bool,
}

pub fn m_const(p: &ModelParams) -> f64 {
    let sr = p.rho().sqrt();
    (1.0 + (1.0 + sr) / (1.0 - sr).powi(2) * (p.m + p.sigma / p.alpha.sqrt())) / (p.mu * (1.0 - sr).powi(2))
}

#[allow(non_snake_case)]
pub fn D_eps(p: &ModelParams) -> DBreakdown {
    let rho = p.rho();
    let mc = m_const(p);
    let q = (rho / (1.0 - rho)).sqrt();
    let ln_pref = (mc * (1.0 + q + p.lambda * q * mc)).ln();
    if p.epsilon == 0.0 {
        return DBreakdown {
            d_eps: 0.0,
            ln_d_eps: f64::NEG_INFINITY,
            delta_eps: 0.0,
            m_const: mc,
            clamp_tail_upper: 0.0,
            clamp_tail_lower: 0.0,
            underflow: false,
        };
    }
    let s = p.stationary_sd();
    let ta = (p.a / p.epsilon - p.m) / s;
    let tb = (p.b / p.epsilon + p.m) / s;
    let ln_scale = 2.0 * (p.epsilon * s).ln();
    let (la, lb) = (ln_scale + ln_j2(ta), ln_scale + ln_j2(tb));
    let hi = la.max(lb);
    let ln_tails = hi + ((la - hi).exp() + (lb - hi).exp()).ln();
    let ln_delta = 0.5 * ((p.mu * p.mu + 3.0 * p.lambda * p.mu).ln() + ln_tails);
    let ln_d = ln_pref + ln_delta;
    let d_eps = ln_d.exp();
    DBreakdown {
        d_eps,
        ln_d_eps: ln_d,
        delta_eps: ln_delta.exp(),
        m_const: mc,
        clamp_tail_upper: la.exp(),
        clamp_tail_lower: lb.exp(),
        underflow: d_eps == 0.0 || d_eps < f64::MIN_POSITIVE,
    }
}

/// `kappa(j) = ||Theta||^j ||c0^{*j}||` with the Gaussian-moment norm.
pub fn kappa(p: &ModelParams, j: usize) -> f64 {
    theta_norm_upper(p).powi(j as i32) * c0_conv_norm(p, j).exact
}

/// `eps` above which the last ratio `eps kappa(j_max) / kappa(j_max - 1)`
/// reaches 1.
pub fn kappa_threshold(p: &ModelParams, j_max: usize) -> f64 {
    kappa(p, j_max - 1) / kappa(p, j_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown {
    #[serde(rename = "D_eps")]
    pub d_eps: f64,
    #[serde(rename = "Delta_eps")]
    pub delta_eps: f64,
    #[serde(rename = "M_const")]
    pub m_const: f64,
    pub clamp_tail_upper: f64,
    pub clamp_tail_lower: f64,
    #[serde(rename = "E_B_total")]
    pub e_b_total: f64,
    /// `D/(1-rho)`, kappa series over `1-rho`, quadratic term.
    #[serde(rename = "E_B_terms")]
    pub e_b_terms: [f64; 3],
    pub kappa_series_tail: f64,
    pub kappa_ratio: f64,
    /// Same series with the squared-norm Hermite formula in place of the
    /// Gaussian-moment norm.
    pub kappa_literal_sum: f64,
    pub d_underflow: bool,
    pub j_max: usize,
}

#[allow(non_snake_case)]
pub fn E_B(p: &ModelParams, j_max: usize) -> Result<BoundBreakdown> {
    p.validate()?;
    if j_max < 2 {
        return Err(Error::InvalidParam {
            name: "j_max",
            reason: format!("must be at least 2, got {j_max}"),
        });
    }
    check_reduced_rate(p)?;
    let rho = p.rho();
    let eps = p.epsilon;
    let d = D_eps(p);
    let upper = theta_norm_upper(p);
    let terms: Vec<f64> = (2..=j_max).map(|j| kappa(p, j) * eps.powi(j as i32)).collect();
    let sum: f64 = terms.iter().sum();
    let ratio = if eps == 0.0 {
        0.0
    } else {
        eps * kappa(p, j_max) / kappa(p, j_max - 1)
    };
    if ratio >= 1.0 {
        return Err(Error::KappaDivergence {
            epsilon: eps,
            j_max,
            ratio,
            threshold: kappa_threshold(p, j_max),
        });
    }
    let last = *terms.last().expect("j_max >= 2");
    let tail = last * ratio / (1.0 - ratio);
    if tail >= KAPPA_TAIL_SHARE * sum && sum > 0.0 {
        return Err(Error::KappaTail { tail, sum });
    }
    let kappa_literal_sum = (2..=j_max)
        .map(|j| upper.powi(j as i32) * c0_conv_norm(p, j).literal_squared * eps.powi(j as i32))
        .sum::<f64>()
        / (1.0 - rho);
    let quad = 2.0 * rho * (p.m * eps).powi(2) / ((1.0 - rho - p.m * eps) * (1.0 - rho).powi(2));
    let e_b_terms = [d.d_eps / (1.0 - rho), sum / (1.0 - rho), quad];
    Ok(BoundBreakdown {
        d_eps: d.d_eps,
        delta_eps: d.delta_eps,
        m_const: d.m_const,
        clamp_tail_upper: d.clamp_tail_upper,
        clamp_tail_lower: d.clamp_tail_lower,
        e_b_total: e_b_terms[0] + e_b_terms[1] + e_b_terms[2],
        e_b_terms,
        kappa_series_tail: tail / (1.0 - rho),
        kappa_ratio: ratio,
        kappa_literal_sum,
        d_underflow: d.underflow,
        j_max,
    })
}

/// Sweeps behind the two bound figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FigureConfig {
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_points: usize,
    pub sigmas: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_points: usize,
    pub eps_values: Vec<f64>,
    pub j_max: usize,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            eps_min: 1e-5,
            eps_max: 5e-4,
            eps_points: 40,
            sigmas: vec![2.0, 3.0, 4.0],
            sigma_min: 1.0,
            sigma_max: 5.0,
            sigma_points: 40,
            eps_values: vec![1e-4, 2e-4, 3e-4, 5e-4],
            j_max: DEFAULT_J_MAX,
        }
    }
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// One CSV row. Rows where the kappa series fails its checks carry NaN in
/// `e_b` and `kappa_term` and the reason in `note`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub sweep: f64,
    pub series: String,
    pub e_b: f64,
    pub d_term: f64,
    pub kappa_term: f64,
    pub quad_term: f64,
    pub note: Option<String>,
}

impl FigureRow {
    pub fn converged(&self) -> bool {
        self.note.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureTables {
    /// `E_B` against `eps` for each `sigma`.
    pub by_epsilon: Vec<FigureRow>,
    /// `E_B` against `sigma` for each `eps`.
    pub by_sigma: Vec<FigureRow>,
}

fn figure_row(p: &ModelParams, sweep: f64, series: String, j_max: usize) -> FigureRow {
    match E_B(p, j_max) {
        Ok(b) => FigureRow {
            sweep,
            series,
            e_b: b.e_b_total,
            d_term: b.e_b_terms[0],
            kappa_term: b.e_b_terms[1],
            quad_term: b.e_b_terms[2],
            note: None,
        },
        Err(e) => {
            let rho = p.rho();
            let quad = 2.0 * rho * (p.m * p.epsilon).powi(2) / ((1.0 - rho - p.m * p.epsilon) * (1.0 - rho).powi(2));
            FigureRow {
                sweep,
                series,
                e_b: f64::NAN,
                d_term: D_eps(p).d_eps / (1.0 - rho),
                kappa_term: f64::NAN,
                quad_term: quad,
                note: Some(e.to_string()),
            }
        }
    }
}

/// Series label for a fixed `eps = x * 1e-4`, e.g. `x=3`.
pub fn eps_series_label(eps: f64) -> String {
    let x = eps * 1e4;
    if (x - x.round()).abs() < 1e-9 * x.abs().max(1.0) {
        format!("x={}", x.round())
    } else {
        format!("x={x}")
    }
}

pub fn figure_data(base: &ModelParams, cfg: &FigureConfig) -> Result<FigureTables> {
    base.validate()?;
    let mut jobs1 = Vec::new();
    for &s in &cfg.sigmas {
        for e in logspace(cfg.eps_min, cfg.eps_max, cfg.eps_points) {
            jobs1.push((base.with_sigma(s).with_epsilon(e), e, format!("sigma={s}")));
        }
    }
    let mut jobs2 = Vec::new();
    for &e in &cfg.eps_values {
        for s in linspace(cfg.sigma_min, cfg.sigma_max, cfg.sigma_points) {
            jobs2.push((base.with_sigma(s).with_epsilon(e), s, eps_series_label(e)));
        }
    }
    for (p, _, _) in jobs1.iter().chain(&jobs2) {
        p.validate()?;
    }
    let run = |jobs: Vec<(ModelParams, f64, String)>| -> Vec<FigureRow> {
        jobs.into_par_iter()
            .map(|(p, x, label)| figure_row(&p, x, label, cfg.j_max))
            .collect()
    };
    Ok(FigureTables {
        by_epsilon: run(jobs1),
        by_sigma: run(jobs2),
    })
}

pub const FIGURE_CSV_HEADER: &str = "sweep,series,E_B,D_term,kappa_term,quad_term";

pub fn rows_to_csv(rows: &[FigureRow]) -> String {
    let mut out = String::from(FIGURE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{:e},{},{:e},{:e},{:e},{:e}\n",
            r.sweep, r.series, r.e_b, r.d_term, r.kappa_term, r.quad_term
        ));
    }
    out
}

/// Gnuplot script drawing both tables on log axes.
pub fn plot_script(eps_csv: &str, sigma_csv: &str, cfg: &FigureConfig) -> String {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nset logscale y\n");
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str("set output 'bound_vs_eps.png'\nset logscale x\nset xlabel 'eps'\nset ylabel 'E_B'\nplot ");
    let parts: Vec<String> = cfg
        .sigmas
        .iter()
        .map(|sg| format!("'{eps_csv}' using 1:(strcol(2) eq 'sigma={sg}' ? $3 : NaN) with lines title 'sigma={sg}'"))
        .collect();
    s.push_str(&parts.join(", \\\n     "));
    s.push_str("\nset output 'bound_vs_sigma.png'\nunset logscale x\nset xlabel 'sigma'\nplot ");
    let parts: Vec<String> = cfg
        .eps_values
        .iter()
        .map(|&e| {
            let l = eps_series_label(e);
            format!("'{sigma_csv}' using 1:(strcol(2) eq '{l}' ? $3 : NaN) with lines title 'eps={e:e}'")
        })
        .collect();
    s.push_str(&parts.join(", \\\n     "));
    s.push('\n');
    s
}
