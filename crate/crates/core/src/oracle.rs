//! Finite CTMC discretization of the joint process `(X, L)` and its
//! stationary distribution.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ou_density, phi, phi_linear, ModelParams};

pub const DEFAULT_NX: usize = 201;
pub const DEFAULT_HALF_WIDTH: f64 = 8.0;
pub const DEFAULT_NQ: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_x: usize,
    /// In units of the stationary deviation `sigma / sqrt(2 alpha)`.
    pub half_width: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_x: DEFAULT_NX,
            half_width: DEFAULT_HALF_WIDTH,
        }
    }
}

impl GridSpec {
    pub fn new(n_x: usize, half_width: f64) -> Result<Self> {
        let g = Self { n_x, half_width };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x < 3 {
            return Err(Error::InvalidParam {
                name: "n_x",
                reason: format!("need at least 3 grid points, got {}", self.n_x),
            });
        }
        if self.half_width.is_nan() || self.half_width < 4.0 {
            return Err(Error::InvalidParam {
                name: "half_width",
                reason: format!("must be at least 4, got {}", self.half_width),
            });
        }
        Ok(())
    }

    pub fn spacing(&self, p: &ModelParams) -> f64 {
        2.0 * self.half_width * p.stationary_sd() / (self.n_x - 1) as f64
    }

    pub fn nodes(&self, p: &ModelParams) -> Vec<f64> {
        let lo = p.m - self.half_width * p.stationary_sd();
        let h = self.spacing(p);
        (0..self.n_x).map(|i| lo + h * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Modulator {
    #[default]
    Clamped,
    Linear,
}

/// Discretization of the OU drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriftScheme {
    /// First-order upwinding of the drift.
    Upwind,
    /// Scharfetter-Gummel weights: second order, detailed balance with the
    /// Gaussian density on the grid.
    #[default]
    ExponentialFit,
}

/// `z / (e^z - 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-12 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Generator with states `(i, j)` stored at index `j n_x + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointGenerator {
    pub params: ModelParams,
    pub grid: GridSpec,
    pub n_q: usize,
    pub modulator: Modulator,
    pub scheme: DriftScheme,
    pub x: Vec<f64>,
    /// Rates `x_i -> x_{i+1}` and `x_{i+1} -> x_i`.
    pub up: Vec<f64>,
    pub down: Vec<f64>,
    /// Service rate at each grid point.
    pub service: Vec<f64>,
}

pub fn build_joint_generator(
    p: &ModelParams,
    grid: GridSpec,
    n_q: usize,
    modulator: Modulator,
    scheme: DriftScheme,
) -> Result<JointGenerator> {
    p.validate()?;
    grid.validate()?;
    if n_q < 1 {
        return Err(Error::InvalidParam {
            name: "n_q",
            reason: "queue truncation must be at least 1".into(),
        });
    }
    let x = grid.nodes(p);
    let h = grid.spacing(p);
    let diff = p.sigma * p.sigma / (2.0 * h * h);
    let n = x.len();
    let (mut up, mut down) = (vec![0.0; n - 1], vec![0.0; n - 1]);
    for i in 0..n - 1 {
        match scheme {
            DriftScheme::Upwind => {
                up[i] = diff + p.alpha * (p.m - x[i]).max(0.0) / h;
                down[i] = diff + p.alpha * (x[i + 1] - p.m).max(0.0) / h;
            }
            DriftScheme::ExponentialFit => {
                let mid = 0.5 * (x[i] + x[i + 1]);
                let z = 2.0 * p.alpha * (mid - p.m) * h / (p.sigma * p.sigma);
                up[i] = diff * bernoulli(z);
                down[i] = diff * bernoulli(-z);
            }
        }
    }
    let mut service = Vec::with_capacity(n);
    for &xi in &x {
        let rate = match modulator {
            Modulator::Clamped => p.mu * phi(p, xi),
            Modulator::Linear => p.mu * phi_linear(p, xi),
        };
        if rate < 0.0 {
            return Err(Error::NegativeRate { rate, x: xi });
        }
        service.push(rate);
    }
    Ok(JointGenerator {
        params: *p,
        grid,
        n_q,
        modulator,
        scheme,
        x,
        up,
        down,
        service,
    })
}

impl JointGenerator {
    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_x() * (self.n_q + 1)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n_x() + i
    }

    /// Sparse triplets `(row, col, rate)` including the diagonal.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let nx = self.n_x();
        let lambda = self.params.lambda;
        let mut out = Vec::with_capacity(5 * self.n_states());
        for j in 0..=self.n_q {
            for i in 0..nx {
                let s = self.index(i, j);
                let mut total = 0.0;
                if i + 1 < nx {
                    out.push((s, self.index(i + 1, j), self.up[i]));
                    total += self.up[i];
                }
                if i > 0 {
                    out.push((s, self.index(i - 1, j), self.down[i - 1]));
                    total += self.down[i - 1];
                }
                if j < self.n_q {
                    out.push((s, self.index(i, j + 1), lambda));
                    total += lambda;
                }
                if j > 0 && self.service[i] > 0.0 {
                    out.push((s, self.index(i, j - 1), self.service[i]));
                    total += self.service[i];
                }
                out.push((s, s, -total));
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_states()];
        for (r, _, v) in self.triplets() {
            sums[r] += v;
        }
        sums
    }

    /// `pi G` for a row vector.
    pub fn left_apply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states()];
        for (r, c, v) in self.triplets() {
            out[c] += pi[r] * v;
        }
        out
    }

    /// OU block as a dense generator.
    fn ou_block(&self) -> DMatrix<f64> {
        let n = self.n_x();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            g[(i, i + 1)] = self.up[i];
            g[(i, i)] -= self.up[i];
            g[(i + 1, i)] = self.down[i];
            g[(i + 1, i + 1)] -= self.down[i];
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryTable {
    pub params: ModelParams,
    pub x: Vec<f64>,
    pub n_q: usize,
    /// `pi[j * n_x + i]`.
    pub pi: Vec<f64>,
    /// `||pi G||_inf`.
    pub residual: f64,
}

fn invert(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.try_inverse()
        .ok_or_else(|| Error::Solver("singular block in level reduction".into()))
}

/// Solves `pi G = 0`, `sum pi = 1` by block level reduction:
/// `pi_j = pi_{j-1} R_j` with `R_N = -lambda D_N^{-1}` and
/// `R_j = -lambda (D_j + R_{j+1} S)^{-1}`.
pub fn stationary(gen: &JointGenerator) -> Result<StationaryTable> {
    let n = gen.n_x();
    let nq = gen.n_q;
    let lambda = gen.params.lambda;
    let ou = gen.ou_block();
    let s = DMatrix::from_diagonal(&DVector::from_vec(gen.service.clone()));
    let diag_block = |j: usize| -> DMatrix<f64> {
        let mut d = ou.clone();
        for i in 0..n {
            if j < nq {
                d[(i, i)] -= lambda;
            }
            if j > 0 {
                d[(i, i)] -= gen.service[i];
            }
        }
        d
    };
    let mut rs: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); nq + 1];
    rs[nq] = invert(diag_block(nq))? * (-lambda);
    for j in (1..nq).rev() {
        let m = diag_block(j) + &rs[j + 1] * &s;
        rs[j] = invert(m)? * (-lambda);
    }
    let mut m0 = diag_block(0);
    if nq >= 1 {
        m0 += &rs[1] * &s;
    }
    // left null vector of m0: replace one equation by the normalization
    let mut a = m0.transpose();
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi0 = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("level-0 system is singular".into()))?;
    let mut levels = vec![pi0.transpose()];
    for j in 1..=nq {
        let next = &levels[j - 1] * &rs[j];
        levels.push(next);
    }
    let mut pi: Vec<f64> = levels.iter().flat_map(|row| row.iter().copied()).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v = (*v / total).max(0.0));
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    let residual = gen.left_apply(&pi).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(StationaryTable {
        params: gen.params,
        x: gen.x.clone(),
        n_q: nq,
        pi,
        residual,
    })
}

/// Summaries at a given `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub u: f64,
    pub gen_fn: f64,
    pub mean_queue: f64,
    pub queue_marginal: Vec<f64>,
    pub x_marginal: Vec<f64>,
}

impl StationaryTable {
    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.pi[j * self.n_x() + i]
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        (0..self.n_x())
            .map(|i| (0..=self.n_q).map(|j| self.prob(i, j)).sum())
            .collect()
    }

    pub fn queue_marginal(&self) -> Vec<f64> {
        self.pi.chunks(self.n_x()).map(|c| c.iter().sum()).collect()
    }

    /// `P_j(x_i) = P(L = j | X = x_i) / rho^j`.
    pub fn conditional(&self, i: usize, j: usize) -> f64 {
        let mx: f64 = (0..=self.n_q).map(|k| self.prob(i, k)).sum();
        self.prob(i, j) / mx / self.params.rho().powi(j as i32)
    }

    pub fn gen_fn(&self, u: f64) -> f64 {
        self.queue_marginal()
            .iter()
            .enumerate()
            .map(|(j, q)| q * u.powi(j as i32))
            .sum()
    }

    pub fn observables(&self, u: f64) -> Observables {
        let q = self.queue_marginal();
        Observables {
            u,
            gen_fn: self.gen_fn(u),
            mean_queue: q.iter().enumerate().map(|(j, v)| j as f64 * v).sum(),
            queue_marginal: q,
            x_marginal: self.x_marginal(),
        }
    }

    /// Rows `x,j,pi,P` ordered by `j` then `x`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,j,pi,P\n");
        for j in 0..=self.n_q {
            for i in 0..self.n_x() {
                s.push_str(&format!(
                    "{:e},{},{:e},{:e}\n",
                    self.x[i],
                    j,
                    self.prob(i, j),
                    self.conditional(i, j)
                ));
            }
        }
        s
    }
}

/// Oracle settings shared by the helpers below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub grid: GridSpec,
    pub n_q: usize,
    pub modulator: Modulator,
    pub scheme: DriftScheme,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            n_q: DEFAULT_NQ,
            modulator: Modulator::Clamped,
            scheme: DriftScheme::ExponentialFit,
        }
    }
}

pub fn solve(p: &ModelParams, cfg: &OracleConfig) -> Result<StationaryTable> {
    stationary(&build_joint_generator(p, cfg.grid, cfg.n_q, cfg.modulator, cfg.scheme)?)
}

/// Central difference in `eps` of `E[u^L]` at `p.epsilon` with step `delta`.
pub fn epsilon_slope(p: &ModelParams, cfg: &OracleConfig, us: &[f64], delta: f64) -> Result<Vec<f64>> {
    let tables: Vec<StationaryTable> = [p.epsilon + delta, p.epsilon - delta]
        .par_iter()
        .map(|&e| solve(&p.with_epsilon(e), cfg))
        .collect::<Result<_>>()?;
    Ok(us
        .iter()
        .map(|&u| (tables[0].gen_fn(u) - tables[1].gen_fn(u)) / (2.0 * delta))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n_x: usize,
    pub h: f64,
    pub n_q: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub u: f64,
    pub rows: Vec<ConvergenceRow>,
    /// `|v_k - v_{k-1}| / |v_{k+1} - v_k|`.
    pub ratios: Vec<f64>,
    /// `log2` of each ratio, i.e. the observed order under halving.
    pub orders: Vec<f64>,
}

pub fn convergence_study(
    p: &ModelParams,
    levels: &[(GridSpec, usize)],
    scheme: DriftScheme,
    u: f64,
) -> Result<ConvergenceTable> {
    if levels.len() < 3 {
        return Err(Error::InvalidParam {
            name: "levels",
            reason: format!("need at least 3 refinement levels, got {}", levels.len()),
        });
    }
    let rows: Vec<ConvergenceRow> = levels
        .par_iter()
        .map(|&(grid, n_q)| {
            let cfg = OracleConfig {
                grid,
                n_q,
                modulator: Modulator::Clamped,
                scheme,
            };
            solve(p, &cfg).map(|t| ConvergenceRow {
                n_x: grid.n_x,
                h: grid.spacing(p),
                n_q,
                value: t.gen_fn(u),
            })
        })
        .collect::<Result<_>>()?;
    let diffs: Vec<f64> = rows.windows(2).map(|w| w[1].value - w[0].value).collect();
    let ratios: Vec<f64> = diffs.windows(2).map(|w| (w[0] / w[1]).abs()).collect();
    let orders = ratios.iter().map(|r| r.log2()).collect();
    Ok(ConvergenceTable {
        u,
        rows,
        ratios,
        orders,
    })
}

/// OU grid marginal at `eps`-independent stationarity, for comparison with
/// the density.
pub fn ou_grid_l1_error(gen: &JointGenerator, table: &StationaryTable) -> f64 {
    let dens: Vec<f64> = gen.x.iter().map(|&x| ou_density(&gen.params, x)).collect();
    let dsum: f64 = dens.iter().sum();
    table
        .x_marginal()
        .iter()
        .zip(&dens)
        .map(|(a, d)| (a - d / dsum).abs())
        .sum()
}
