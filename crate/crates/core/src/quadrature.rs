//! Gauss-type quadrature rules.
//!
//! Nodes come from the Golub-Welsch eigenproblem and are polished by Newton
//! iteration on the orthonormal recurrence; weights use the Christoffel
//! function `1 / sum_k p_k(t)^2`, which stays accurate for the extreme nodes.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

/// Quadrature nodes and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn sum<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }

    /// Node/weight table as CSV, for debugging.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,weight\n");
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            out.push_str(&format!("{t:.17e},{w:.17e}\n"));
        }
        out
    }
}

fn golub_welsch(n: usize, offdiag: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = offdiag(k);
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nodes
}

/// Evaluates orthonormal p_0..p_n at t for a symmetric three-term family
/// `b_{k+1} p_{k+1} = t p_k - b_k p_{k-1}`.
fn orthonormal_values(n: usize, t: f64, p0: f64, b: &impl Fn(usize) -> f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(n + 1);
    p.push(p0);
    if n == 0 {
        return p;
    }
    p.push(t * p0 / b(1));
    for k in 1..n {
        let next = (t * p[k] - b(k) * p[k - 1]) / b(k + 1);
        p.push(next);
    }
    p
}

fn polish(n: usize, p0: f64, b: impl Fn(usize) -> f64) -> Rule {
    let mut nodes = golub_welsch(n, &b);
    for t in nodes.iter_mut() {
        for _ in 0..4 {
            let p = orthonormal_values(n, *t, p0, &b);
            let dp = orthonormal_derivative(n, *t, &p, &b);
            if dp == 0.0 {
                break;
            }
            let step = p[n] / dp;
            *t -= step;
            if step.abs() < 1e-16 * (1.0 + t.abs()) {
                break;
            }
        }
    }
    let weights = nodes
        .iter()
        .map(|&t| {
            let p = orthonormal_values(n - 1, t, p0, &b);
            1.0 / p.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    Rule { nodes, weights }
}

fn orthonormal_derivative(n: usize, t: f64, p: &[f64], b: &impl Fn(usize) -> f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut d_prev = 0.0;
    let mut d = p[0] / b(1);
    for k in 1..n {
        let next = (p[k] + t * d - b(k) * d_prev) / b(k + 1);
        d_prev = d;
        d = next;
    }
    d
}

/// Gauss-Hermite rule for the weight `exp(-t^2)` on the real line.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    polish(n, PI.powf(-0.25), |k| (k as f64 / 2.0).sqrt())
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    polish(n, 1.0 / 2f64.sqrt(), |k| {
        let k = k as f64;
        k / (4.0 * k * k - 1.0).sqrt()
    })
}

/// Gauss-Legendre integral of `f` over `[lo, hi]`.
pub fn integrate_interval<F: FnMut(f64) -> f64>(rule: &Rule, lo: f64, hi: f64, mut f: F) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    half * rule.sum(|t| f(mid + half * t))
}

/// Gauss-Chebyshev rule of the second kind: integrates `f(s) sqrt(1 - s^2)`
/// over [-1, 1] exactly for polynomial `f` of degree below `2n`.
pub fn chebyshev_second_kind(n: usize) -> Rule {
    let h = PI / (n as f64 + 1.0);
    let (nodes, weights) = (1..=n)
        .map(|k| {
            let th = k as f64 * h;
            (th.cos(), h * th.sin().powi(2))
        })
        .unzip();
    Rule { nodes, weights }
}

/// Adaptive Gauss-Kronrod-free bisection: recursively compares a 20-point
/// Legendre estimate with the sum of its two halves.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> f64 {
    let rule = gauss_legendre(20);
    fn rec<F: Fn(f64) -> f64>(rule: &Rule, f: &F, lo: f64, hi: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (lo + hi);
        let left = integrate_interval(rule, lo, mid, f);
        let right = integrate_interval(rule, mid, hi, f);
        if depth == 0 || (left + right - whole).abs() <= tol * (left + right).abs().max(1e-300) {
            left + right
        } else {
            rec(rule, f, lo, mid, left, tol, depth - 1) + rec(rule, f, mid, hi, right, tol, depth - 1)
        }
    }
    let whole = integrate_interval(&rule, lo, hi, f);
    rec(&rule, f, lo, hi, whole, tol, 30)
}
