//! Orthogonal polynomial families and the birth-death spectral measures.
//!
//! The Hermite family is normalized to be orthonormal under the stationary
//! OU density: with `t = sqrt(alpha) (x - m) / sigma`,
//! `h_j(x) = H_j(t) / sqrt(2^j j!)`, so `h_0 = 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quadrature::chebyshev_second_kind;

/// Physicists' Hermite polynomial `H_j(x)`.
pub fn hermite_poly(j: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if j == 0 {
        return prev;
    }
    for k in 1..j {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Chebyshev polynomial of the second kind `U_j(x)`.
#[allow(non_snake_case)]
pub fn chebyshev_U(j: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if j == 0 {
        return prev;
    }
    for _ in 1..j {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Orthonormal Hermite eigenfunctions of the OU generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteBasis {
    pub alpha: f64,
    pub m: f64,
    pub sigma: f64,
    pub max_degree: usize,
}

impl HermiteBasis {
    pub fn new(params: &ModelParams, max_degree: usize) -> Self {
        Self {
            alpha: params.alpha,
            m: params.m,
            sigma: params.sigma,
            max_degree,
        }
    }

    /// Scaled variable `sqrt(alpha) (x - m) / sigma`.
    pub fn scaled(&self, x: f64) -> f64 {
        self.alpha.sqrt() * (x - self.m) / self.sigma
    }

    /// `h_0(x), ..., h_n(x)` by the normalized recurrence
    /// `sqrt(k+1) q_{k+1} = sqrt(2) t q_k - sqrt(k) q_{k-1}`.
    pub fn values(&self, n: usize, x: f64) -> Vec<f64> {
        let t = self.scaled(x);
        let mut q = Vec::with_capacity(n + 1);
        q.push(1.0);
        if n >= 1 {
            q.push(2f64.sqrt() * t);
        }
        for k in 1..n {
            let kf = k as f64;
            let next = (2f64.sqrt() * t * q[k] - kf.sqrt() * q[k - 1]) / (kf + 1.0).sqrt();
            q.push(next);
        }
        q
    }

    pub fn eval(&self, j: usize, x: f64) -> Result<f64> {
        if j > self.max_degree {
            return Err(Error::OutOfRange {
                index: j,
                max: self.max_degree,
            });
        }
        Ok(self.values(j, x)[j])
    }

    /// Coefficient `beta_k = sigma sqrt(k) / sqrt(2 alpha)` of the relation
    /// `x h_k = beta_{k+1} h_{k+1} + m h_k + beta_k h_{k-1}`.
    pub fn beta(&self, k: usize) -> f64 {
        self.sigma * (k as f64).sqrt() / (2.0 * self.alpha).sqrt()
    }
}

/// `h_j(x)` with range checking against the basis.
pub fn hermite_fn(basis: &HermiteBasis, j: usize, x: f64) -> Result<f64> {
    basis.eval(j, x)
}

/// Three-term evaluation of the M/M/1 polynomials with `Q_0 = 1`, the given
/// `Q_1`, and `lambda Q_{j+1} = (z + lambda + mu) Q_j - mu Q_{j-1}`.
fn mm1_recurrence(p: &ModelParams, j: usize, z: f64, q1: f64) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let (mut prev, mut cur) = (1.0, q1);
    for _ in 1..j {
        let next = ((z + p.lambda + p.mu) * cur - p.mu * prev) / p.lambda;
        prev = cur;
        cur = next;
    }
    cur
}

/// `Q_j(z)`: eigenvector components of the full M/M/1 generator.
#[allow(non_snake_case)]
pub fn mm1_poly_Q(p: &ModelParams, j: usize, z: f64) -> f64 {
    mm1_recurrence(p, j, z, (z + p.lambda) / p.lambda)
}

/// `Q^(1)_j(z)`: eigenvector components of the generator absorbed at 0.
#[allow(non_snake_case)]
pub fn mm1_poly_Q1(p: &ModelParams, j: usize, z: f64) -> f64 {
    mm1_recurrence(p, j, z, (z + p.lambda + p.mu) / p.lambda)
}

/// `Q^(1)_j(z)` through `rho^{-j/2} U_j((z + lambda + mu) / (2 sqrt(lambda mu)))`.
/// Preferred near the support edges for large `j`.
#[allow(non_snake_case)]
pub fn mm1_poly_Q1_chebyshev(p: &ModelParams, j: usize, z: f64) -> f64 {
    let s = (z + p.lambda + p.mu) / (2.0 * (p.lambda * p.mu).sqrt());
    p.rho().powf(-(j as f64) / 2.0) * chebyshev_U(j, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureKind {
    /// Full M/M/1 generator: atom at 0 plus continuous part.
    Psi,
    /// Generator absorbed at 0: semicircle law only.
    Psi1,
}

/// Spectral measure of an M/M/1 birth-death generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub kind: MeasureKind,
    /// `(location, mass)` pairs.
    pub atoms: Vec<(f64, f64)>,
    /// Continuous support `[-mu (1 + sqrt rho)^2, -mu (1 - sqrt rho)^2]`.
    pub support: (f64, f64),
    center: f64,
    radius: f64,
    sqrt_rho: f64,
    nodes: usize,
}

impl SpectralMeasure {
    fn new(p: &ModelParams, kind: MeasureKind) -> Self {
        let sqrt_rho = p.rho().sqrt();
        let support = (-p.mu * (1.0 + sqrt_rho).powi(2), -p.mu * (1.0 - sqrt_rho).powi(2));
        let atoms = match kind {
            MeasureKind::Psi => vec![(0.0, 1.0 - p.rho())],
            MeasureKind::Psi1 => Vec::new(),
        };
        Self {
            kind,
            atoms,
            support,
            center: -(p.lambda + p.mu),
            radius: 2.0 * (p.lambda * p.mu).sqrt(),
            sqrt_rho,
            nodes: 400,
        }
    }

    /// Uses `n` Chebyshev nodes for the continuous part (default 400).
    pub fn with_nodes(mut self, n: usize) -> Self {
        self.nodes = n;
        self
    }

    /// Density of the continuous part; zero outside the support.
    pub fn density(&self, x: f64) -> f64 {
        if x <= self.support.0 || x >= self.support.1 {
            return 0.0;
        }
        let s = (x - self.center) / self.radius;
        let root = (1.0 - s * s).max(0.0).sqrt();
        match self.kind {
            MeasureKind::Psi => -(self.sqrt_rho / PI) * root / x,
            MeasureKind::Psi1 => 2.0 / PI * root / self.radius,
        }
    }

    /// `int h dmeasure`: atoms plus Chebyshev-Gauss quadrature of the
    /// continuous part after `x = center + radius * cos(theta)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, h: F) -> f64 {
        let rule = chebyshev_second_kind(self.nodes);
        let atoms: f64 = self.atoms.iter().map(|&(x, w)| w * h(x)).sum();
        let cont = match self.kind {
            MeasureKind::Psi => {
                -(self.sqrt_rho / PI)
                    * self.radius
                    * rule.sum(|s| {
                        let x = self.center + self.radius * s;
                        h(x) / x
                    })
            }
            MeasureKind::Psi1 => 2.0 / PI * rule.sum(|s| h(self.center + self.radius * s)),
        };
        atoms + cont
    }

    pub fn total_mass(&self) -> f64 {
        self.integrate(|_| 1.0)
    }
}

pub fn measure_psi(p: &ModelParams) -> SpectralMeasure {
    SpectralMeasure::new(p, MeasureKind::Psi)
}

pub fn measure_psi1(p: &ModelParams) -> SpectralMeasure {
    SpectralMeasure::new(p, MeasureKind::Psi1)
}

pub fn integrate_psi<F: Fn(f64) -> f64>(measure: &SpectralMeasure, h: F) -> f64 {
    measure.integrate(h)
}

pub fn integrate_psi1<F: Fn(f64) -> f64>(measure: &SpectralMeasure, h: F) -> f64 {
    measure.integrate(h)
}
