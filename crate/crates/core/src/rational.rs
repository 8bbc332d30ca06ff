//! Real polynomials and rational functions `N(u) / prod_j (u - r_j)^{k_j}`
//! with poles tracked by an integer key.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Coefficients in ascending powers of `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn zero() -> Self {
        Poly(vec![0.0])
    }

    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    /// `u - r`.
    pub fn linear_root(r: f64) -> Self {
        Poly(vec![-r, 1.0])
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    pub fn eval_complex(&self, u: Complex64) -> Complex64 {
        self.0
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * u + c)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly(
            (0..n)
                .map(|i| self.0.get(i).unwrap_or(&0.0) + other.0.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn pow(&self, k: u32) -> Poly {
        (0..k).fold(Poly::constant(1.0), |acc, _| acc.mul(self))
    }

    /// Synthetic division by `u - r`, returning quotient and remainder.
    pub fn div_linear(&self, r: f64) -> (Poly, f64) {
        let n = self.0.len();
        if n == 1 {
            return (Poly::zero(), self.0[0]);
        }
        let mut q = vec![0.0; n - 1];
        let mut carry = 0.0;
        for i in (1..n).rev() {
            carry = carry * r + self.0[i];
            q[i - 1] = carry;
        }
        let rem = carry * r + self.0[0];
        (Poly(q), rem)
    }

    fn trimmed(mut self) -> Poly {
        let d = self.degree();
        self.0.truncate(d + 1);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub location: f64,
    pub multiplicity: u32,
}

/// Rational function with a polynomial numerator and a factored
/// denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalFn {
    pub numerator: Poly,
    pub poles: BTreeMap<usize, Pole>,
}

/// Failed exact division: the remainder exceeded the tolerance relative to
/// the largest numerator coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionRemainder {
    pub remainder: f64,
    pub relative: f64,
}

impl RationalFn {
    pub fn from_poly(p: Poly) -> Self {
        Self {
            numerator: p,
            poles: BTreeMap::new(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_poly(Poly::constant(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.0.iter().all(|&c| c == 0.0)
    }

    pub fn denominator(&self) -> Poly {
        self.poles.values().fold(Poly::constant(1.0), |acc, p| {
            acc.mul(&Poly::linear_root(p.location).pow(p.multiplicity))
        })
    }

    pub fn eval(&self, u: f64) -> f64 {
        let den: f64 = self
            .poles
            .values()
            .map(|p| (u - p.location).powi(p.multiplicity as i32))
            .product();
        self.numerator.eval(u) / den
    }

    pub fn eval_complex(&self, u: Complex64) -> Complex64 {
        let den: Complex64 = self
            .poles
            .values()
            .map(|p| (u - p.location).powi(p.multiplicity as i32))
            .product();
        self.numerator.eval_complex(u) / den
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            numerator: self.numerator.scale(s),
            poles: self.poles.clone(),
        }
    }

    pub fn mul_poly(&self, p: &Poly) -> Self {
        Self {
            numerator: self.numerator.mul(p),
            poles: self.poles.clone(),
        }
    }

    /// Multiplies the denominator by `u - location`, keyed by `key`.
    pub fn with_pole(&self, key: usize, location: f64) -> Self {
        let mut out = self.clone();
        out.poles
            .entry(key)
            .and_modify(|p| p.multiplicity += 1)
            .or_insert(Pole {
                location,
                multiplicity: 1,
            });
        out
    }

    fn raised_to(&self, poles: &BTreeMap<usize, Pole>) -> Poly {
        poles.iter().fold(self.numerator.clone(), |acc, (key, p)| {
            let have = self.poles.get(key).map_or(0, |q| q.multiplicity);
            acc.mul(&Poly::linear_root(p.location).pow(p.multiplicity - have))
        })
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut poles = self.poles.clone();
        for (key, p) in &other.poles {
            poles
                .entry(*key)
                .and_modify(|q| q.multiplicity = q.multiplicity.max(p.multiplicity))
                .or_insert(*p);
        }
        let numerator = self.raised_to(&poles).add(&other.raised_to(&poles)).trimmed();
        Self { numerator, poles }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// `self - c`.
    pub fn sub_const(&self, c: f64) -> Self {
        self.sub(&Self::constant(c))
    }

    /// Divides the numerator by `u - r`, requiring the remainder to be below
    /// `tol` relative to the largest numerator coefficient.
    pub fn divide_root(&self, r: f64, tol: f64) -> Result<Self, DivisionRemainder> {
        let (q, rem) = self.numerator.div_linear(r);
        let scale = self.numerator.max_abs().max(f64::MIN_POSITIVE);
        let relative = rem.abs() / scale;
        if relative > tol {
            return Err(DivisionRemainder {
                remainder: rem,
                relative,
            });
        }
        Ok(Self {
            numerator: q,
            poles: self.poles.clone(),
        })
    }

    /// First `n` Taylor coefficients at `u = 0`.
    pub fn taylor(&self, n: usize) -> Vec<f64> {
        let den = self.denominator().0;
        let num = &self.numerator.0;
        let d0 = den[0];
        let mut out = vec![0.0; n];
        for k in 0..n {
            let mut s = num.get(k).copied().unwrap_or(0.0);
            for (i, &d) in den.iter().enumerate().skip(1).take(k) {
                s -= d * out[k - i];
            }
            out[k] = s / d0;
        }
        out
    }

    /// Pole locations with multiplicity, for inspection.
    pub fn pole_locations(&self) -> Vec<f64> {
        self.poles.values().map(|p| p.location).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn synthetic_division() {
        // (u - 2)(u + 3) = u^2 + u - 6
        let p = Poly(vec![-6.0, 1.0, 1.0]);
        let (q, r) = p.div_linear(2.0);
        assert_eq!(q, Poly(vec![3.0, 1.0]));
        assert_eq!(r, 0.0);
        let (_, r) = p.div_linear(1.0);
        assert_eq!(r, -4.0);
    }

    #[test]
    fn add_uses_common_denominator() {
        let a = RationalFn::constant(1.0).with_pole(0, 2.0);
        let b = RationalFn::constant(1.0).with_pole(1, 3.0);
        let s = a.add(&b);
        for u in [0.0, 0.5, -1.0, 1.7] {
            assert_relative_eq!(s.eval(u), 1.0 / (u - 2.0) + 1.0 / (u - 3.0), max_relative = 1e-14);
        }
        let d = a.with_pole(0, 2.0).add(&a);
        assert_eq!(d.poles[&0].multiplicity, 2);
        assert_relative_eq!(d.eval(0.3), 1.0 / 1.7f64.powi(2) - 1.0 / 1.7, max_relative = 1e-14);
    }

    #[test]
    fn exact_division_checks_remainder() {
        let f = RationalFn::from_poly(Poly(vec![-1.0, 0.0, 1.0])).with_pole(0, 4.0);
        let g = f.divide_root(1.0, 1e-12).unwrap();
        assert_relative_eq!(g.eval(0.2), 1.2 / (0.2 - 4.0), max_relative = 1e-14);
        assert!(f.divide_root(0.5, 1e-12).is_err());
    }

    #[test]
    fn taylor_geometric() {
        // 1 / (1 - u/2) = -2 / (u - 2)
        let f = RationalFn::constant(-2.0).with_pole(0, 2.0);
        let t = f.taylor(10);
        for (k, c) in t.iter().enumerate() {
            assert_relative_eq!(*c, 0.5f64.powi(k as i32), max_relative = 1e-14);
        }
    }

    #[test]
    fn complex_eval_matches_real() {
        let f = RationalFn::from_poly(Poly(vec![1.0, -2.0, 0.5]))
            .with_pole(3, 5.0)
            .with_pole(3, 5.0);
        let z = Complex64::new(0.7, 0.0);
        assert_relative_eq!(f.eval_complex(z).re, f.eval(0.7), max_relative = 1e-14);
    }
}
