//! Truncated generators and multiplication operators acting on coefficient
//! fields `f = sum_{k,j} c[k][j] h_k(x) e_j` with squared norm
//! `sum c[k][j]^2 rho^j`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{phi, ModelParams};
use crate::orthopoly::{mm1_poly_Q1, HermiteBasis};
use crate::quadrature::gauss_hermite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorKind {
    /// Full M/M/1 generator, reflecting at the last state.
    A,
    /// Generator absorbed at 0, rows `e_1, e_2, ...`, cut at `N`.
    A1,
    /// Generator of the M/M/1/N queue absorbed at 0.
    A1N,
    B,
    B1,
    B1N,
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(Self::A),
            "A1" => Ok(Self::A1),
            "A1N" => Ok(Self::A1N),
            "B" => Ok(Self::B),
            "B1" => Ok(Self::B1),
            "B1N" => Ok(Self::B1N),
            other => Err(Error::InvalidKind(other.to_string())),
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Tridiagonal `N x N` rate matrix. `sup[i]` is entry `(i, i+1)` and
/// `sub[i]` is entry `(i+1, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalGenerator {
    pub kind: GeneratorKind,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub sub: Vec<f64>,
}

pub fn build_generator(p: &ModelParams, kind: GeneratorKind, n: usize) -> Result<TridiagonalGenerator> {
    if n == 0 {
        return Err(Error::InvalidParam {
            name: "N",
            reason: "generator size must be at least 1".into(),
        });
    }
    let (l, m) = (p.lambda, p.mu);
    let mut diag = vec![0.0; n];
    let sup = vec![l; n - 1];
    let mut sub = vec![m; n - 1];
    match kind {
        GeneratorKind::A => {
            diag.fill(-(l + m));
            diag[0] = -l;
            if n > 1 {
                diag[n - 1] = -m;
            } else {
                diag[0] = 0.0;
            }
        }
        GeneratorKind::A1 => diag.fill(-(l + m)),
        GeneratorKind::A1N => {
            diag.fill(-(l + m));
            if n > 1 {
                diag[n - 1] = -m;
            }
        }
        GeneratorKind::B => {
            diag.fill(-m);
            diag[0] = 0.0;
            sub.fill(0.0);
        }
        GeneratorKind::B1 | GeneratorKind::B1N => {
            diag.fill(-m);
            sub.fill(0.0);
        }
    }
    Ok(TridiagonalGenerator { kind, diag, sup, sub })
}

impl TridiagonalGenerator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = self.diag[i];
            if i + 1 < n {
                a[(i, i + 1)] = self.sup[i];
                a[(i + 1, i)] = self.sub[i];
            }
        }
        a
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i];
                if i + 1 < n {
                    s += self.sup[i];
                }
                if i > 0 {
                    s += self.sub[i - 1];
                }
                s
            })
            .collect()
    }

    /// `y = G x` for a queue profile.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i + 1 < n {
                    s += self.sup[i] * x[i + 1];
                }
                if i > 0 {
                    s += self.sub[i - 1] * x[i - 1];
                }
                s
            })
            .collect()
    }

    /// `D G D^{-1}` with `D = diag(rho^{j/2})`; symmetric for birth-death
    /// kinds with constant rates.
    pub fn symmetrized(&self, rho: f64) -> DMatrix<f64> {
        let n = self.len();
        let mut a = self.to_dense();
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] *= rho.powf((i as f64 - j as f64) / 2.0);
            }
        }
        a
    }
}

/// Eigenstructure of `A1^[N]` from two independent routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1NEigen {
    /// Eigenvalues `-x_j`, ascending in magnitude (from the root route).
    pub eigenvalues: Vec<f64>,
    /// Same eigenvalues from the symmetric eigensolve.
    pub eigenvalues_symmetric: Vec<f64>,
    /// Vectors `(Q1_0(z), ..., Q1_{N-1}(z))` for each eigenvalue `z`.
    pub eigenvectors: Vec<Vec<f64>>,
    pub max_discrepancy: f64,
}

/// Characteristic function of `A1^[N]` in terms of the absorbed-queue
/// polynomials: an eigenvector has components `Q1_{k-1}(z)`, and the last
/// row `mu v_{N-1} - mu v_N = z v_N` reduces to `Q1_N(z) = Q1_{N-1}(z)`.
pub fn a1n_characteristic(p: &ModelParams, n: usize, z: f64) -> f64 {
    if n == 1 {
        mm1_poly_Q1(p, 1, z)
    } else {
        mm1_poly_Q1(p, n, z) - mm1_poly_Q1(p, n - 1, z)
    }
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn characteristic_roots(p: &ModelParams, n: usize) -> Result<Vec<f64>> {
    let r = 2.0 * (p.lambda * p.mu).sqrt();
    let lo = -(p.lambda + p.mu) - r - 1.0;
    let hi = (-p.mu + r).max(0.0) + 1.0;
    let f = |z: f64| a1n_characteristic(p, n, z);
    let mut points = 64 * n + 64;
    let mut found = 0;
    for refinement in 0..8 {
        let h = (hi - lo) / points as f64;
        let mut roots = Vec::with_capacity(n);
        let mut prev_z = lo;
        let mut prev_f = f(lo);
        for i in 1..=points {
            let z = lo + h * i as f64;
            let fz = f(z);
            if fz == 0.0 {
                roots.push(z);
            } else if prev_f != 0.0 && (fz < 0.0) != (prev_f < 0.0) {
                roots.push(bisect(&f, prev_z, z));
            }
            prev_z = z;
            prev_f = fz;
        }
        found = roots.len();
        if found == n {
            return Ok(roots);
        }
        let _ = refinement;
        points *= 2;
    }
    Err(Error::RootBracketing {
        found,
        expected: n,
        refinements: 8,
    })
}

pub fn eigen_a1n(p: &ModelParams, n: usize) -> Result<A1NEigen> {
    let gen = build_generator(p, GeneratorKind::A1N, n)?;
    let sym = SymmetricEigen::new(gen.symmetrized(p.rho()));
    let by_magnitude = |v: &mut Vec<f64>| v.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
    let mut eig_sym: Vec<f64> = sym.eigenvalues.iter().copied().collect();
    by_magnitude(&mut eig_sym);
    let mut eig_roots = characteristic_roots(p, n)?;
    by_magnitude(&mut eig_roots);
    let max_discrepancy = eig_sym
        .iter()
        .zip(&eig_roots)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let eigenvectors = eig_roots
        .iter()
        .map(|&z| (0..n).map(|k| mm1_poly_Q1(p, k, z)).collect())
        .collect();
    Ok(A1NEigen {
        eigenvalues: eig_roots,
        eigenvalues_symmetric: eig_sym,
        eigenvectors,
        max_discrepancy,
    })
}

/// Element of the weighted field space, stored as `coeffs[k][j]` for Hermite
/// degree `k` and queue index `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffField {
    pub params: ModelParams,
    pub coeffs: Vec<Vec<f64>>,
}

impl CoeffField {
    pub fn zeros(params: &ModelParams, max_degree: usize, max_queue: usize) -> Self {
        Self {
            params: *params,
            coeffs: vec![vec![0.0; max_queue + 1]; max_degree + 1],
        }
    }

    /// The all-ones queue profile `e`, constant in `x`.
    pub fn ones(params: &ModelParams, max_degree: usize, max_queue: usize) -> Self {
        let mut f = Self::zeros(params, max_degree, max_queue);
        f.coeffs[0].fill(1.0);
        f
    }

    pub fn max_degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn max_queue(&self) -> usize {
        self.coeffs[0].len() - 1
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.coeffs.get(k).and_then(|row| row.get(j)).copied().unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        let rho = self.params.rho();
        self.coeffs
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, c)| c * c * rho.powi(j as i32))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|c| s * c)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            params: self.params,
            coeffs: self.coeffs.iter().map(|r| r.iter().map(|&c| f(c)).collect()).collect(),
        }
    }

    /// Zero-padded to the given degree.
    pub fn padded(&self, max_degree: usize) -> Self {
        let mut out = self.clone();
        let width = self.max_queue() + 1;
        while out.coeffs.len() <= max_degree {
            out.coeffs.push(vec![0.0; width]);
        }
        out
    }

    /// Sum of two fields over the same queue range; degrees are padded.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.max_queue(), other.max_queue(), "queue truncations differ");
        let k = self.max_degree().max(other.max_degree());
        let mut out = self.padded(k);
        for (row, orow) in out.coeffs.iter_mut().zip(&other.coeffs) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        out
    }

    /// Drops degrees above `max_degree`; errors if any dropped coefficient is
    /// nonzero.
    pub fn truncated(&self, max_degree: usize) -> Result<Self> {
        if let Some(k) = (max_degree + 1..self.coeffs.len())
            .rev()
            .find(|&k| self.coeffs[k].iter().any(|&c| c != 0.0))
        {
            return Err(Error::Truncation {
                needed: k,
                capacity: max_degree,
            });
        }
        let mut out = self.clone();
        out.coeffs.truncate(max_degree + 1);
        Ok(out)
    }

    fn map_profiles(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        Self {
            params: self.params,
            coeffs: self.coeffs.iter().map(|r| f(r)).collect(),
        }
    }
}

/// OU generator: degree-`k` slice times `-alpha k`.
#[allow(non_snake_case)]
pub fn apply_H(field: &CoeffField) -> CoeffField {
    let alpha = field.params.alpha;
    let mut out = field.clone();
    for (k, row) in out.coeffs.iter_mut().enumerate() {
        let e = -alpha * k as f64;
        row.iter_mut().for_each(|c| *c *= e);
    }
    out
}

/// Queue generator with reflecting truncation at the last index.
#[allow(non_snake_case)]
pub fn apply_A(field: &CoeffField) -> CoeffField {
    let gen = build_generator(&field.params, GeneratorKind::A, field.max_queue() + 1).expect("nonempty");
    field.map_profiles(|r| gen.apply(r))
}

/// `(Bf)_0 = lambda f_1`, `(Bf)_j = -mu f_j + lambda f_{j+1}`.
#[allow(non_snake_case)]
pub fn apply_B(field: &CoeffField) -> CoeffField {
    let gen = build_generator(&field.params, GeneratorKind::B, field.max_queue() + 1).expect("nonempty");
    field.map_profiles(|r| gen.apply(r))
}

/// Multiplication by `x`, raising the Hermite degree by one.
pub fn multiply_x(field: &CoeffField) -> CoeffField {
    let basis = HermiteBasis::new(&field.params, field.max_degree() + 1);
    let kmax = field.max_degree();
    let mut out = CoeffField::zeros(&field.params, kmax + 1, field.max_queue());
    for k in 0..=kmax {
        let up = basis.beta(k + 1);
        let down = basis.beta(k);
        for (j, &c) in field.coeffs[k].iter().enumerate() {
            out.coeffs[k + 1][j] += up * c;
            out.coeffs[k][j] += field.params.m * c;
            if k > 0 {
                out.coeffs[k - 1][j] += down * c;
            }
        }
    }
    out
}

/// `Wf = -eps x Bf`; the output degree is one above the input.
#[allow(non_snake_case)]
pub fn apply_W(field: &CoeffField) -> CoeffField {
    multiply_x(&apply_B(field)).scale(-field.params.epsilon)
}

/// `apply_W` restricted to a degree capacity.
#[allow(non_snake_case)]
pub fn apply_W_within(field: &CoeffField, max_degree: usize) -> Result<CoeffField> {
    apply_W(field).truncated(max_degree)
}

/// Result of the quadrature projection behind [`apply_V`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub field: CoeffField,
    /// Max coefficient change against a rule with 20 more nodes.
    pub projection_error: f64,
}

fn clamp_multiplier_matrix(p: &ModelParams, in_deg: usize, out_deg: usize, nodes: usize) -> Vec<Vec<f64>> {
    let basis = HermiteBasis::new(p, in_deg.max(out_deg));
    let rule = gauss_hermite(nodes);
    let scale = p.sigma / p.alpha.sqrt();
    let norm = std::f64::consts::PI.sqrt();
    let mut mat = vec![vec![0.0; in_deg + 1]; out_deg + 1];
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let x = p.m + scale * t;
        let v = basis.values(in_deg.max(out_deg), x);
        let g = (phi(p, x) - 1.0) * w / norm;
        for (l, row) in mat.iter_mut().enumerate() {
            for (k, e) in row.iter_mut().enumerate() {
                *e += g * v[l] * v[k];
            }
        }
    }
    mat
}

/// `Vf = (phi(x) - 1) Bf` projected onto Hermite degrees `<= out_degree`
/// using a Gauss-Hermite rule with `K + 20` nodes.
#[allow(non_snake_case)]
pub fn apply_V(field: &CoeffField, out_degree: usize) -> Projected {
    let p = &field.params;
    let bf = apply_B(field);
    let k = field.max_degree().max(out_degree);
    let project = |nodes: usize| {
        let mat = clamp_multiplier_matrix(p, field.max_degree(), out_degree, nodes);
        let mut out = CoeffField::zeros(p, out_degree, field.max_queue());
        for (l, row) in mat.iter().enumerate() {
            for (kk, &w) in row.iter().enumerate() {
                for (j, c) in bf.coeffs[kk].iter().enumerate() {
                    out.coeffs[l][j] += w * c;
                }
            }
        }
        out
    };
    let field_out = project(k + 20);
    let finer = project(k + 40);
    let projection_error = field_out
        .coeffs
        .iter()
        .flatten()
        .zip(finer.coeffs.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Projected {
        field: field_out,
        projection_error,
    }
}

/// `||(H + A + V) f||` with `V` projected onto one degree above the input.
pub fn residual(field: &CoeffField) -> f64 {
    let v = apply_V(field, field.max_degree() + 1).field;
    apply_H(field).add(&apply_A(field)).add(&v).norm()
}

/// `||(H + A + W) f||`.
pub fn residual_linear(field: &CoeffField) -> f64 {
    apply_H(field).add(&apply_A(field)).add(&apply_W(field)).norm()
}

/// Closed-form operator bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    /// `mu (1 + sqrt rho)^2`, bound on `-A`.
    pub a_bound: f64,
    /// `mu (1 - sqrt rho)^2`, coercivity of `-A_1`.
    pub coercivity: f64,
    /// `mu (1 + sqrt rho)`, bound on `B`.
    pub b_bound: f64,
    /// `1 / (mu (1 - sqrt rho)^2)`, bound on `(H_1 + A_1)^{-1}`.
    pub resolvent: f64,
    /// `2 eps (1 + sqrt rho) / (1 - sqrt rho)^2 (m + sigma / sqrt alpha)`.
    pub w1_bound: f64,
}

pub fn norm_bounds(p: &ModelParams) -> NormBounds {
    let mu = p.mu;
    let sr = p.rho().sqrt();
    NormBounds {
        a_bound: mu * (1.0 + sr).powi(2),
        coercivity: mu * (1.0 - sr).powi(2),
        b_bound: mu * (1.0 + sr),
        resolvent: 1.0 / (mu * (1.0 - sr).powi(2)),
        w1_bound: crate::model::condeps2_value(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ModelParams {
        ModelParams::figure_base(2.0, 1e-3)
    }

    fn random_field(p: &ModelParams, k: usize, n: usize, seed: u64) -> CoeffField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = CoeffField::zeros(p, k, n);
        for row in f.coeffs.iter_mut() {
            for c in row.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
        }
        f
    }

    #[test]
    fn generator_shapes() {
        let p = params();
        let a = build_generator(&p, GeneratorKind::A, 2).unwrap().to_dense();
        assert_eq!(a.as_slice(), &[-7.0, 10.0, 7.0, -10.0]);
        let a1n = build_generator(&p, GeneratorKind::A1N, 1).unwrap();
        assert_eq!(a1n.diag, vec![-17.0]);
        assert!(build_generator(&p, GeneratorKind::A, 0).is_err());
        assert!("C".parse::<GeneratorKind>().is_err());
        assert_eq!("B1N".parse::<GeneratorKind>().unwrap(), GeneratorKind::B1N);
    }

    #[test]
    fn row_sums() {
        let p = params();
        let a = build_generator(&p, GeneratorKind::A, 30).unwrap();
        assert!(a.row_sums().iter().all(|s| s.abs() < 1e-12));
        let a1n = build_generator(&p, GeneratorKind::A1N, 30).unwrap();
        let rs = a1n.row_sums();
        assert!((rs[0] + p.mu).abs() < 1e-12);
        assert!(rs[1..].iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn symmetrized_a1n_is_symmetric() {
        let p = params();
        for n in [2, 10, 40] {
            let s = build_generator(&p, GeneratorKind::A1N, n).unwrap().symmetrized(p.rho());
            let asym = (&s - s.transpose()).abs().max();
            assert!(asym < 1e-12);
        }
    }

    #[test]
    fn eigen_single_state() {
        let p = params();
        let e = eigen_a1n(&p, 1).unwrap();
        assert!((e.eigenvalues[0] + p.lambda + p.mu).abs() < 1e-12);
        assert!(e.max_discrepancy < 1e-12);
    }

    #[test]
    fn eigen_routes_agree_and_are_bounded() {
        let p = params();
        let bound = norm_bounds(&p).a_bound;
        for n in 1..=50 {
            let e = eigen_a1n(&p, n).unwrap();
            assert_eq!(e.eigenvalues.len(), n);
            assert!(e.max_discrepancy < 1e-8, "n={n}: {}", e.max_discrepancy);
            assert!(e.eigenvalues.iter().all(|&z| z < 0.0 && z >= -bound - 1e-9));
            assert!(e.eigenvalues.windows(2).all(|w| w[0].abs() <= w[1].abs()));
        }
    }

    #[test]
    fn eigenvectors_orthogonal_in_weighted_product() {
        let p = params();
        let e = eigen_a1n(&p, 12).unwrap();
        let rho = p.rho();
        let dot = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .enumerate()
                .map(|(k, (x, y))| x * y * rho.powi(k as i32 + 1))
                .sum()
        };
        for i in 0..12 {
            for j in 0..i {
                let d = dot(&e.eigenvectors[i], &e.eigenvectors[j]);
                let n =
                    (dot(&e.eigenvectors[i], &e.eigenvectors[i]) * dot(&e.eigenvectors[j], &e.eigenvectors[j])).sqrt();
                assert!(d.abs() < 1e-9 * n, "{i},{j}: {d}");
            }
        }
        // eigen relation on the dense matrix
        let a = build_generator(&p, GeneratorKind::A1N, 12).unwrap();
        for (z, v) in e.eigenvalues.iter().zip(&e.eigenvectors) {
            let av = a.apply(v);
            let err = av.iter().zip(v).map(|(x, y)| (x - z * y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8 * v.iter().map(|x| x.abs()).fold(0.0, f64::max));
        }
    }

    #[test]
    fn rayleigh_quotients_within_bound() {
        let p = params();
        let bound = norm_bounds(&p).a_bound;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [3, 17, 45] {
            let s = build_generator(&p, GeneratorKind::A1N, n).unwrap().symmetrized(p.rho());
            for _ in 0..20 {
                let v = nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let q = (v.transpose() * &s * &v)[(0, 0)] / v.norm_squared();
                assert!(q < 0.0 && q >= -bound);
            }
        }
    }

    #[test]
    fn apply_h_kernel_and_mode() {
        let p = params();
        let e = CoeffField::ones(&p, 4, 10);
        assert_eq!(apply_H(&e).norm(), 0.0);
        let mut f = CoeffField::zeros(&p, 4, 10);
        f.coeffs[3][5] = 2.0;
        let h = apply_H(&f);
        assert_eq!(h.coeffs[3][5], -6.0 * p.alpha);
        assert!((h.norm() - 6.0 * p.alpha * p.rho().powi(5).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn apply_b_on_ones() {
        let p = params();
        let b = apply_B(&CoeffField::ones(&p, 0, 8));
        assert_eq!(b.coeffs[0][0], p.lambda);
        for j in 1..8 {
            assert_eq!(b.coeffs[0][j], p.lambda - p.mu);
        }
        // truncated last row keeps only the service term
        assert_eq!(b.coeffs[0][8], -p.mu);
    }

    #[test]
    fn operators_are_linear() {
        let p = params();
        let f = random_field(&p, 3, 12, 1);
        let g = random_field(&p, 3, 12, 2);
        for op in [apply_H, apply_A, apply_B, apply_W] {
            let lhs = op(&f.scale(2.5).add(&g));
            let rhs = op(&f).scale(2.5).add(&op(&g));
            let diff = lhs.add(&rhs.scale(-1.0)).norm();
            assert!(diff < 1e-12 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn apply_w_on_x_constant_field() {
        let p = params();
        let mut f = CoeffField::zeros(&p, 0, 6);
        f.coeffs[0] = vec![1.0, 0.5, -0.25, 2.0, 0.0, 1.0, 3.0];
        let w = apply_W(&f);
        let bq = apply_B(&f).coeffs[0].clone();
        let basis = HermiteBasis::new(&p, 1);
        for j in 0..=6 {
            assert!((w.coeffs[0][j] + p.epsilon * p.m * bq[j]).abs() < 1e-15);
            assert!((w.coeffs[1][j] + p.epsilon * basis.beta(1) * bq[j]).abs() < 1e-15);
        }
        assert!(apply_W_within(&f, 0).is_err());
        assert!(apply_W_within(&f, 1).is_ok());
    }

    #[test]
    fn v_matches_w_when_clamps_are_far() {
        let p = ModelParams::figure_base(2.0, 1e-3);
        let f = random_field(&p, 4, 10, 9);
        let v = apply_V(&f, 5);
        let w = apply_W(&f);
        let diff = v.field.add(&w.scale(-1.0)).norm();
        assert!(diff < 1e-8 * w.norm(), "{diff}");
        assert!(v.projection_error < 1e-10);
    }

    #[test]
    fn v_reports_projection_error_with_active_clamp() {
        let p = ModelParams::figure_base(2.0, 0.3);
        let f = CoeffField::ones(&p, 2, 5);
        let v = apply_V(&f, 3);
        assert!(v.projection_error > 0.0 && v.projection_error.is_finite());
    }

    #[test]
    fn product_form_has_zero_residual() {
        let p = params().with_epsilon(0.0);
        let f = CoeffField::ones(&p, 0, 80).scale(1.0 - p.rho());
        assert!(residual(&f) < 1e-10);
        assert!(residual_linear(&f) < 1e-10);
        let r = random_field(&p, 2, 10, 5);
        assert!(residual(&r) > 0.0);
    }

    #[test]
    fn bounds_values() {
        let p = params();
        let b = norm_bounds(&p);
        assert!((b.a_bound - 10.0 * (1.0 + 0.7f64.sqrt()).powi(2)).abs() < 1e-12);
        let tiny = ModelParams::new(1e-12, 10.0, 1.0, 1.0, 2.0, 0.0, 0.5, 1.0).unwrap();
        assert!((norm_bounds(&tiny).coercivity - 10.0).abs() < 1e-4);
        assert!((b.resolvent * b.coercivity - 1.0).abs() < 1e-15);
    }

    #[test]
    fn field_serializes_with_params() {
        let p = params();
        let f = CoeffField::ones(&p, 1, 2);
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"lambda\":7.0") && s.contains("\"coeffs\":[[1.0,1.0,1.0],[0.0,0.0,0.0]]"));
        let back: CoeffField = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}
