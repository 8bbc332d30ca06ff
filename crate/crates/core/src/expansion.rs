//! Power series in `eps` for the generating function of the linear-modulator
//! solution. Term `i` is a vector of rational functions `c_{i,j}(u)` indexed
//! by Hermite degree `j <= i`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::operators::CoeffField;
use crate::orthopoly::HermiteBasis;
use crate::rational::{Poly, RationalFn};

pub const DEFAULT_MAX_ORDER: usize = 4;
pub const CANCELLATION_TOL: f64 = 1e-10;
const CONTOUR_POINTS: usize = 512;

/// Roots `(u_j, u~_j)` of `rho u^2 - (1 + rho + j alpha / mu) u + 1`, with
/// `(1, 1/rho)` at `j = 0`.
pub fn roots_uj(p: &ModelParams, j: usize) -> (f64, f64) {
    let rho = p.rho();
    if j == 0 {
        return (1.0, 1.0 / rho);
    }
    let b = 1.0 + rho + j as f64 * p.alpha / p.mu;
    let sq = (b * b - 4.0 * rho).sqrt();
    (2.0 / (b + sq), (b + sq) / (2.0 * rho))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub order: usize,
    pub coeffs: Vec<RationalFn>,
}

impl SeriesTerm {
    /// `c_{i,j}(u)`, zero above the stored degrees.
    pub fn coeff(&self, j: usize, u: f64) -> f64 {
        self.coeffs.get(j).map_or(0.0, |c| c.eval(u))
    }

    /// Mean part `c_{i,0}(u)`.
    pub fn mean(&self, u: f64) -> f64 {
        self.coeff(0, u)
    }

    /// Field coefficients `c[k][j] = rho^{-j} [u^j] c_{i,k}(u)`, `j <= max_queue`.
    pub fn to_field(&self, p: &ModelParams, max_queue: usize) -> CoeffField {
        let s = 1.0 / p.rho();
        CoeffField {
            params: *p,
            coeffs: self.coeffs.iter().map(|c| taylor_scaled(c, max_queue + 1, s)).collect(),
        }
    }
}

/// Taylor coefficients of `f(s v)` at `v = 0`.
fn taylor_scaled(f: &RationalFn, n: usize, s: f64) -> Vec<f64> {
    let rescale = |c: &[f64]| -> Vec<f64> {
        let mut w = 1.0;
        c.iter()
            .map(|&x| {
                let y = x * w;
                w *= s;
                y
            })
            .collect()
    };
    let scaled = RationalFn::from_poly(Poly(rescale(&f.numerator.0)));
    let den = rescale(&f.denominator().0);
    let mut out = vec![0.0; n];
    for k in 0..n {
        let mut acc = scaled.numerator.0.get(k).copied().unwrap_or(0.0);
        for (i, &d) in den.iter().enumerate().skip(1).take(k) {
            acc -= d * out[k - i];
        }
        out[k] = acc / den[0];
    }
    out
}

/// `1 / (1 - rho u) = (-1/rho) / (u - 1/rho)`.
fn over_one_minus_rho_u(f: &RationalFn, rho: f64) -> RationalFn {
    f.scale(-1.0 / rho).with_pole(0, 1.0 / rho)
}

pub fn term0(p: &ModelParams) -> SeriesTerm {
    let rho = p.rho();
    SeriesTerm {
        order: 0,
        coeffs: vec![over_one_minus_rho_u(&RationalFn::constant(1.0 - rho), rho)],
    }
}

/// Closed-form first-order term: mean part `a(u)` and the degree-1 part
/// `b(u) / sqrt(2)` against the orthonormal `h_1`.
pub fn term1(p: &ModelParams) -> SeriesTerm {
    let rho = p.rho();
    let cg = 1.0 - rho;
    let a = over_one_minus_rho_u(
        &over_one_minus_rho_u(&RationalFn::from_poly(Poly(vec![-rho * cg * p.m, rho * cg * p.m])), rho),
        rho,
    )
    .scale(1.0 / (1.0 - rho));
    let (u1, ut1) = roots_uj(p, 1);
    let b = over_one_minus_rho_u(
        &RationalFn::from_poly(Poly(vec![1.0, -1.0]))
            .scale(p.sigma * cg / (p.alpha.sqrt() * (1.0 - rho * u1)))
            .with_pole(1, ut1),
        rho,
    );
    SeriesTerm {
        order: 1,
        coeffs: vec![a, b.scale(std::f64::consts::FRAC_1_SQRT_2)],
    }
}

/// One step of the order recursion.
pub fn next_term(p: &ModelParams, prev: &SeriesTerm) -> Result<SeriesTerm> {
    let rho = p.rho();
    let i = prev.order + 1;
    let basis = HermiteBasis::new(p, i);
    let delta: Vec<RationalFn> = prev.coeffs.iter().map(|c| c.sub_const(c.eval(0.0))).collect();
    let part = |k: isize, w: f64| -> RationalFn {
        if k < 0 || w == 0.0 {
            return RationalFn::zero();
        }
        delta.get(k as usize).map_or_else(RationalFn::zero, |c| c.scale(w))
    };
    let mut coeffs = Vec::with_capacity(i + 1);
    for j in 0..=i {
        let ji = j as isize;
        let d = part(ji - 1, basis.beta(j))
            .add(&part(ji, p.m))
            .add(&part(ji + 1, basis.beta(j + 1)));
        let c = if j == 0 {
            over_one_minus_rho_u(&d.sub_const(d.eval(1.0)), rho)
        } else {
            let (uj, utj) = roots_uj(p, j);
            d.sub_const(d.eval(uj))
                .divide_root(uj, CANCELLATION_TOL)
                .map_err(|e| Error::Cancellation {
                    order: i,
                    degree: j,
                    remainder: e.relative,
                    tolerance: CANCELLATION_TOL,
                })?
                .mul_poly(&Poly(vec![1.0, -1.0]))
                .scale(1.0 / rho)
                .with_pole(j, utj)
        };
        coeffs.push(c);
    }
    Ok(SeriesTerm { order: i, coeffs })
}

/// Terms `0..=order`, built by the recursion from `term0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub params: ModelParams,
    pub terms: Vec<SeriesTerm>,
}

impl Expansion {
    pub fn new(p: &ModelParams, order: usize) -> Result<Self> {
        p.validate()?;
        let mut terms = vec![term0(p)];
        for _ in 0..order {
            let next = next_term(p, terms.last().expect("nonempty"))?;
            terms.push(next);
        }
        Ok(Self { params: *p, terms })
    }

    pub fn order(&self) -> usize {
        self.terms.len() - 1
    }

    /// `sum_{i <= i_max} eps^i c_{i,0}(u)`.
    pub fn mean_partial_sum(&self, i_max: usize, u: f64) -> f64 {
        let eps = self.params.epsilon;
        self.terms
            .iter()
            .take(i_max + 1)
            .enumerate()
            .map(|(i, t)| eps.powi(i as i32) * t.mean(u))
            .sum()
    }

    /// Partial sum `sum_{i <= i_max} eps^i g^(i)` as a coefficient field.
    pub fn partial_sum_field(&self, i_max: usize, max_queue: usize) -> CoeffField {
        let eps = self.params.epsilon;
        self.terms
            .iter()
            .take(i_max + 1)
            .enumerate()
            .map(|(i, t)| t.to_field(&self.params, max_queue).scale(eps.powi(i as i32)))
            .reduce(|a, b| a.add(&b))
            .expect("nonempty")
    }
}

/// Operator bound data: `kappa_0`, `kappa_j` for `j = 1..=20`, the bound
/// `max(kappa_0, kappa_1)`, its closed-form majorant and the radius
/// `1 / (m bound)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBound {
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappas: Vec<f64>,
    pub bound: f64,
    pub upper: f64,
    pub radius: f64,
}

pub fn kappa_j(p: &ModelParams, j: usize) -> f64 {
    let sr = p.rho().sqrt();
    let (uj, _) = roots_uj(p, j);
    (1.0 + sr) / ((1.0 - sr).powi(2) + j as f64 * p.alpha / p.mu) * (1.0 + 1.0 / (1.0 - p.rho() * uj * uj).sqrt())
}

/// `(1 + sqrt rho) / (1 - sqrt rho)^2 (1 + 1 / sqrt(1 - rho))`.
pub fn theta_norm_upper(p: &ModelParams) -> f64 {
    let sr = p.rho().sqrt();
    (1.0 + sr) / (1.0 - sr).powi(2) * (1.0 + 1.0 / (1.0 - p.rho()).sqrt())
}

pub fn theta_norm_bound(p: &ModelParams) -> ThetaBound {
    let sr = p.rho().sqrt();
    let kappa0 = (1.0 + 1.0 / (1.0 - p.rho()).sqrt()) / (1.0 - sr);
    let kappas: Vec<f64> = (1..=20).map(|j| kappa_j(p, j)).collect();
    let kappa1 = kappas[0];
    let bound = kappa0.max(kappa1);
    ThetaBound {
        kappa0,
        kappa1,
        kappas,
        bound,
        upper: theta_norm_upper(p),
        radius: 1.0 / (p.m.abs() * bound),
    }
}

/// Weighted norm of a term: `sum_k (1/2pi) int |c_{i,k}(e^{it}/sqrt rho)|^2 dt`
/// by the trapezoid rule.
pub fn term_norm(p: &ModelParams, term: &SeriesTerm) -> f64 {
    let r = 1.0 / p.rho().sqrt();
    let mut total = 0.0;
    for c in &term.coeffs {
        let s: f64 = (0..CONTOUR_POINTS)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / CONTOUR_POINTS as f64;
                c.eval_complex(Complex64::from_polar(r, t)).norm_sqr()
            })
            .sum();
        total += s / CONTOUR_POINTS as f64;
    }
    total.sqrt()
}

/// Norm of the coefficients of `x^i (1 - rho) / (1 - rho u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C0ConvNorm {
    /// `sqrt((1 - rho) E[X^{2i}])` with `X ~ N(m, sigma^2 / (2 alpha))`.
    pub exact: f64,
    /// `(sigma / (2 sqrt alpha))^{2i} H_{2i}(sqrt(alpha) m / sigma)`; may be negative.
    pub literal_squared: f64,
    /// Square root of `literal_squared`, NaN when it is negative.
    pub literal: f64,
}

/// Raw moments `E[X^n]`, `n = 0..=nmax`, of `N(m, s^2)`.
pub fn gaussian_moments(m: f64, s: f64, nmax: usize) -> Vec<f64> {
    let mut mo = vec![1.0; nmax + 1];
    if nmax >= 1 {
        mo[1] = m;
    }
    for n in 2..=nmax {
        mo[n] = m * mo[n - 1] + (n - 1) as f64 * s * s * mo[n - 2];
    }
    mo
}

pub fn c0_conv_norm(p: &ModelParams, i: usize) -> C0ConvNorm {
    let moments = gaussian_moments(p.m, p.stationary_sd(), 2 * i);
    let exact = ((1.0 - p.rho()) * moments[2 * i]).sqrt();
    let literal_squared = (p.sigma / (2.0 * p.alpha.sqrt())).powi(2 * i as i32)
        * crate::orthopoly::hermite_poly(2 * i, p.alpha.sqrt() * p.m / p.sigma);
    C0ConvNorm {
        exact,
        literal_squared,
        literal: if literal_squared >= 0.0 {
            literal_squared.sqrt()
        } else {
            f64::NAN
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEval {
    pub value: f64,
    /// `eps^i c_{i,0}(u)` for each order.
    pub terms: Vec<f64>,
    /// Geometric tail from the last ratio of `eps^i ||g^(i)||`; infinite when
    /// the ratio is not below 1.
    pub tail_estimate: f64,
    pub warning: Option<String>,
}

pub fn eval_series(p: &ModelParams, i_max: usize, u: f64) -> Result<SeriesEval> {
    let exp = Expansion::new(p, i_max)?;
    let eps = p.epsilon;
    let terms: Vec<f64> = exp
        .terms
        .iter()
        .enumerate()
        .map(|(i, t)| eps.powi(i as i32) * t.mean(u))
        .collect();
    let value = terms.iter().sum();
    let tail_estimate = if i_max == 0 || eps == 0.0 {
        0.0
    } else {
        let last = eps.powi(i_max as i32) * term_norm(p, &exp.terms[i_max]);
        let before = eps.powi(i_max as i32 - 1) * term_norm(p, &exp.terms[i_max - 1]);
        let r = last / before;
        if r < 1.0 {
            last * r / (1.0 - r)
        } else {
            f64::INFINITY
        }
    };
    let theta = theta_norm_bound(p);
    let warning = (eps * p.m.abs() * theta.bound >= 1.0).then(|| {
        format!(
            "eps m ||Theta|| = {:.4} is not below 1; series convergence is not guaranteed",
            eps * p.m.abs() * theta.bound
        )
    });
    Ok(SeriesEval {
        value,
        terms,
        tail_estimate,
        warning,
    })
}
