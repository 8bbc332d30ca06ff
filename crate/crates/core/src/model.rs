//! Model parameters, the service-rate modulator and the sufficient-condition
//! diagnostics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::theta_norm_bound;
use crate::quadrature::{gauss_hermite, gauss_legendre, integrate_interval};

/// Default node count for expectations against the stationary OU law.
pub const DEFAULT_NODES: usize = 80;

/// Scalar parameters of the modulated queue.
///
/// Arrivals are Poisson(`lambda`); the server works at rate `mu * phi(X(t))`
/// where `X` is a stationary Ornstein-Uhlenbeck process with mean `m`,
/// mean-reversion rate `alpha` and diffusion coefficient `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub m: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
}

fn require(ok: bool, name: &'static str, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            name,
            reason: reason.to_string(),
        })
    }
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(lambda: f64, mu: f64, alpha: f64, m: f64, sigma: f64, epsilon: f64, a: f64, b: f64) -> Result<Self> {
        let p = Self {
            lambda,
            mu,
            alpha,
            m,
            sigma,
            epsilon,
            a,
            b,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameter set used for the reference bound curves, with the given
    /// diffusion coefficient and perturbation size.
    pub fn figure_base(sigma: f64, epsilon: f64) -> Self {
        Self {
            lambda: 7.0,
            mu: 10.0,
            alpha: 1.0,
            m: 1.0,
            sigma,
            epsilon,
            a: 0.5,
            b: 1.0,
        }
    }

    /// Checks the range invariants. Stability against the mean service factor
    /// is a diagnostic (see [`check_conditions`]) and is not enforced here.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.lambda,
            self.mu,
            self.alpha,
            self.m,
            self.sigma,
            self.epsilon,
            self.a,
            self.b,
        ]
        .iter()
        .all(|v| v.is_finite());
        require(finite, "params", "all fields must be finite")?;
        require(self.lambda > 0.0, "lambda", "must be positive")?;
        require(self.mu > 0.0, "mu", "must be positive")?;
        require(self.alpha > 0.0, "alpha", "must be positive")?;
        require(self.sigma > 0.0, "sigma", "must be positive")?;
        require(self.a > 0.0 && self.a < 1.0, "a", "must lie in (0, 1)")?;
        require(self.b > 0.0, "b", "must be positive")?;
        require((0.0..1.0).contains(&self.epsilon), "epsilon", "must lie in [0, 1)")?;
        require(self.rho() < 1.0, "lambda", "load lambda/mu must be below 1")?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_m(mut self, m: f64) -> Self {
        self.m = m;
        self
    }

    pub fn with_clamps(mut self, a: f64, b: f64) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    /// Load `lambda / mu`.
    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    /// Standard deviation of the stationary OU law, `sigma / sqrt(2 alpha)`.
    pub fn stationary_sd(&self) -> f64 {
        self.sigma / (2.0 * self.alpha).sqrt()
    }

    /// Upper clamp point `a / epsilon` (infinite when epsilon is zero).
    pub fn upper_clamp(&self) -> f64 {
        if self.epsilon > 0.0 {
            self.a / self.epsilon
        } else {
            f64::INFINITY
        }
    }

    /// Lower clamp point `-b / epsilon`.
    pub fn lower_clamp(&self) -> f64 {
        if self.epsilon > 0.0 {
            -self.b / self.epsilon
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Clamped service factor `1 - eps * clamp(x, -b/eps, a/eps)`, always in
/// `[1 - a, 1 + b]`.
pub fn phi(p: &ModelParams, x: f64) -> f64 {
    if p.epsilon == 0.0 {
        return 1.0;
    }
    let clamped = x.clamp(p.lower_clamp(), p.upper_clamp());
    (1.0 - p.epsilon * clamped).clamp(1.0 - p.a, 1.0 + p.b)
}

/// Unclamped linear factor `1 - eps * x`.
pub fn phi_linear(p: &ModelParams, x: f64) -> f64 {
    1.0 - p.epsilon * x
}

/// Stationary density of the modulator.
pub fn ou_density(p: &ModelParams, x: f64) -> f64 {
    let d = x - p.m;
    (p.alpha / PI).sqrt() / p.sigma * (-p.alpha * d * d / (p.sigma * p.sigma)).exp()
}

/// `E[f(X)]` for stationary `X`, by Gauss-Hermite quadrature.
pub fn expect_smooth<F: FnMut(f64) -> f64>(p: &ModelParams, nodes: usize, mut f: F) -> f64 {
    let rule = gauss_hermite(nodes);
    let scale = p.sigma / p.alpha.sqrt();
    rule.sum(|t| f(p.m + scale * t)) / PI.sqrt()
}

/// `E[phi(X)]` with the default node count.
pub fn mean_phi(p: &ModelParams) -> f64 {
    mean_phi_with(p, DEFAULT_NODES)
}

/// `E[phi(X)]`; the integral is split at the clamp points whenever they lie
/// within ten stationary deviations of the mean.
pub fn mean_phi_with(p: &ModelParams, nodes: usize) -> f64 {
    let s = p.stationary_sd();
    let near = |x: f64| (x - p.m).abs() < 10.0 * s;
    let (hi, lo) = (p.upper_clamp(), p.lower_clamp());
    if !near(hi) && !near(lo) {
        return expect_smooth(p, nodes, |x| phi(p, x));
    }
    let rule = gauss_legendre(nodes);
    let left = p.m - 12.0 * s;
    let right = p.m + 12.0 * s;
    let mut cuts = vec![left];
    cuts.extend([lo, hi].into_iter().filter(|&c| c > left && c < right));
    cuts.push(right);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // beyond twelve deviations phi is constant; add the tail masses directly
    let tail = |z: f64| 0.5 * libm::erfc(z / 2f64.sqrt());
    let mut total = phi(p, left) * tail(12.0) + phi(p, right) * tail(12.0);
    for w in cuts.windows(2) {
        total += integrate_interval(&rule, w[0], w[1], |x| phi(p, x) * ou_density(p, x));
    }
    total
}

/// One sufficient condition: `margin = threshold - value`, positive when
/// satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub ok: bool,
    pub value: f64,
    pub threshold: f64,
    pub margin: f64,
}

impl ConditionCheck {
    fn below(value: f64, threshold: f64) -> Self {
        let margin = threshold - value;
        Self {
            ok: margin > 0.0,
            value,
            threshold,
            margin,
        }
    }
}

/// Diagnostic report on the sufficient conditions. Violations are warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `max(a, b) < (1 - sqrt(rho))^2 / (1 + sqrt(rho))`.
    pub condeps: ConditionCheck,
    /// `2 eps (1 + sqrt(rho)) / (1 - sqrt(rho))^2 (m + sigma / sqrt(alpha)) < 1`.
    pub condeps2: ConditionCheck,
    /// `eps m ||Theta|| < 1` (series radius).
    pub radius: ConditionCheck,
    /// `rho < E[phi(X)]`.
    pub stability: ConditionCheck,
    pub warnings: Vec<String>,
}

impl ConditionReport {
    pub fn all_ok(&self) -> bool {
        self.condeps.ok && self.condeps2.ok && self.radius.ok && self.stability.ok
    }
}

pub fn condeps_threshold(p: &ModelParams) -> f64 {
    let sr = p.rho().sqrt();
    (1.0 - sr).powi(2) / (1.0 + sr)
}

/// Left side of the linear-modulator condition.
pub fn condeps2_value(p: &ModelParams) -> f64 {
    let sr = p.rho().sqrt();
    2.0 * p.epsilon * (1.0 + sr) / (1.0 - sr).powi(2) * (p.m + p.sigma / p.alpha.sqrt())
}

pub fn check_conditions(p: &ModelParams) -> ConditionReport {
    let condeps = ConditionCheck::below(p.a.max(p.b), condeps_threshold(p));
    let condeps2 = ConditionCheck::below(condeps2_value(p), 1.0);
    let theta = theta_norm_bound(p);
    let radius = ConditionCheck::below(p.epsilon * p.m.abs() * theta.bound, 1.0);
    // stability compares rho against E[phi]; margin E[phi] - rho
    let stability = ConditionCheck::below(p.rho(), mean_phi(p));
    let mut warnings = Vec::new();
    if !condeps.ok {
        warnings.push(format!(
            "max(a, b) = {} is not below {:.6}; uniqueness of the clamped solution is not guaranteed",
            condeps.value, condeps.threshold
        ));
    }
    if !condeps2.ok {
        warnings.push(format!(
            "linear-modulator condition value {:.6} is not below 1",
            condeps2.value
        ));
    }
    if !radius.ok {
        warnings.push(format!(
            "epsilon m ||Theta|| = {:.6} is not below 1; the power series may not converge",
            radius.value
        ));
    }
    if !stability.ok {
        warnings.push(format!(
            "rho = {} is not below E[phi(X)] = {:.6}",
            stability.value, stability.threshold
        ));
    }
    ConditionReport {
        condeps,
        condeps2,
        radius,
        stability,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::erfc;

    fn fig1() -> ModelParams {
        ModelParams::figure_base(2.0, 1e-4)
    }

    /// Closed-form `E[phi(X)]` through Gaussian partial moments.
    fn mean_phi_closed(p: &ModelParams) -> f64 {
        let s = p.stationary_sd();
        let q = |z: f64| 0.5 * erfc(z / 2f64.sqrt());
        let dens = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
        let za = (p.upper_clamp() - p.m) / s;
        let zb = (p.lower_clamp() - p.m) / s;
        // E[X; zb < Z < za] = m P + s (dens(zb) - dens(za))
        let inner_p = 1.0 - q(za) - q(-zb);
        let inner_x = p.m * inner_p + s * (dens(zb) - dens(za));
        (1.0 - p.a) * q(za) + (1.0 + p.b) * q(-zb) + inner_p - p.epsilon * inner_x
    }

    #[test]
    fn phi_linear_window_and_saturation() {
        let p = fig1();
        assert_eq!(phi(&p, 3.0), 1.0 - 3e-4);
        assert!((phi(&p, 2.0 * p.a / p.epsilon) - (1.0 - p.a)).abs() < 1e-15);
        assert!((phi(&p, -2.0 * p.b / p.epsilon) - (1.0 + p.b)).abs() < 1e-15);
        assert_eq!(phi_linear(&p, 0.0), 1.0);
        assert_eq!(phi_linear(&p, p.m), 1.0 - p.epsilon * p.m);
        assert_eq!(phi(&p, 12.5), phi_linear(&p, 12.5));
    }

    #[test]
    fn density_peak_mass_and_variance() {
        let p = fig1();
        assert!((ou_density(&p, p.m) - (p.alpha / PI).sqrt() / p.sigma).abs() < 1e-15);
        let s = p.stationary_sd();
        let rule = gauss_legendre(200);
        let mass = integrate_interval(&rule, p.m - 10.0 * s, p.m + 10.0 * s, |x| ou_density(&p, x));
        assert!((mass - 1.0).abs() < 1e-12);
        let var = integrate_interval(&rule, p.m - 10.0 * s, p.m + 10.0 * s, |x| {
            (x - p.m).powi(2) * ou_density(&p, x)
        });
        assert!((var - p.sigma * p.sigma / (2.0 * p.alpha)).abs() < 1e-12);
    }

    #[test]
    fn mean_phi_limits() {
        let p = fig1().with_epsilon(0.0);
        assert!((mean_phi(&p) - 1.0).abs() < 1e-13);
        // clamps far away: linear mean
        let p = fig1().with_epsilon(1e-3);
        assert!((mean_phi(&p) - (1.0 - p.epsilon * p.m)).abs() < 1e-10);
        // symmetric clamp about zero mean
        let p = ModelParams::new(7.0, 10.0, 1.0, 0.0, 2.0, 0.2, 0.5, 0.5).unwrap();
        assert!((mean_phi(&p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_phi_matches_partial_moments_with_active_clamp() {
        for (eps, sigma) in [(0.2, 2.0), (0.3, 3.0), (0.05, 4.0), (0.9, 1.0)] {
            let p = fig1().with_epsilon(eps).with_sigma(sigma);
            let q = mean_phi(&p);
            assert!((q - mean_phi_closed(&p)).abs() < 1e-10, "eps {eps} sigma {sigma}: {q}");
            assert!(q >= 1.0 - p.a && q <= 1.0 + p.b);
        }
    }

    #[test]
    fn mean_phi_nonincreasing_in_m() {
        let base = fig1().with_epsilon(0.2);
        let vals: Vec<f64> = (0..30)
            .map(|k| mean_phi(&base.with_m(-3.0 + 0.25 * k as f64)))
            .collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-13));
    }

    #[test]
    fn figure_parameters_violate_condeps_only() {
        let r = check_conditions(&fig1());
        let sr = 0.7f64.sqrt();
        assert!((r.condeps.threshold - (1.0 - sr).powi(2) / (1.0 + sr)).abs() < 1e-15);
        assert!(!r.condeps.ok);
        assert!(r.condeps2.ok);
        let expected = 2.0 * 1e-4 * (1.0 + sr) / (1.0 - sr).powi(2) * (1.0 + 2.0);
        assert!((r.condeps2.value - expected).abs() < 1e-15);
        assert!(r.radius.ok && r.stability.ok);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn zero_epsilon_satisfies_eps_conditions() {
        let r = check_conditions(&fig1().with_epsilon(0.0));
        assert!(r.condeps2.ok && r.radius.ok);
        assert_eq!(r.condeps2.value, 0.0);
    }

    #[test]
    fn condeps2_margin_changes_sign_at_threshold() {
        let p = fig1();
        let (mut lo, mut hi) = (0.0, 0.99);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if check_conditions(&p.with_epsilon(mid)).condeps2.margin > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let sr = p.rho().sqrt();
        let analytic = (1.0 - sr).powi(2) / (2.0 * (1.0 + sr) * (p.m + p.sigma / p.alpha.sqrt()));
        assert!((lo - analytic).abs() < 1e-14);
    }

    #[test]
    fn condeps_margin_changes_sign_at_threshold() {
        let p = fig1();
        let t = condeps_threshold(&p);
        assert!(check_conditions(&p.with_clamps(t * 0.999, t * 0.999)).condeps.ok);
        assert!(!check_conditions(&p.with_clamps(t * 0.999, t * 1.001)).condeps.ok);
    }

    #[test]
    fn json_rejects_unknown_and_missing_fields() {
        let good = r#"{"lambda":7,"mu":10,"alpha":1,"m":1,"sigma":2,"epsilon":1e-4,"a":0.5,"b":1}"#;
        assert_eq!(ModelParams::from_json(good).unwrap(), fig1());
        let extra = r#"{"lambda":7,"mu":10,"alpha":1,"m":1,"sigma":2,"epsilon":1e-4,"a":0.5,"b":1,"c":2}"#;
        assert!(ModelParams::from_json(extra).is_err());
        let missing = r#"{"lambda":7,"mu":10,"alpha":1,"m":1,"sigma":2,"a":0.5,"b":1}"#;
        let err = ModelParams::from_json(missing).unwrap_err().to_string();
        assert!(err.contains("epsilon"), "{err}");
    }

    #[test]
    fn validation_rejects_out_of_range() {
        assert!(ModelParams::new(10.0, 10.0, 1.0, 1.0, 2.0, 0.0, 0.5, 1.0).is_err());
        assert!(ModelParams::new(7.0, 10.0, 1.0, 1.0, 2.0, 0.0, 1.5, 1.0).is_err());
        assert!(ModelParams::new(7.0, 10.0, -1.0, 1.0, 2.0, 0.0, 0.5, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn phi_bounded_and_lipschitz(x in -1e4f64..1e4, y in -1e4f64..1e4, eps in 1e-5f64..0.9) {
            let p = fig1().with_epsilon(eps);
            let (fx, fy) = (phi(&p, x), phi(&p, y));
            proptest::prop_assert!(fx >= 1.0 - p.a - 1e-15 && fx <= 1.0 + p.b + 1e-15);
            proptest::prop_assert!((fx - fy).abs() <= eps * (x - y).abs() + 1e-12);
        }
    }
}
