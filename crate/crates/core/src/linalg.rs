//! Dense linear algebra used throughout the crate.
//!
//! All operator norms are spectral norms. Long products are carried as
//! [`ScaledMatrix`] values: a unit-sized matrix together with a binary
//! exponent, so that products of millions of factors neither overflow nor
//! underflow. Rescaling is done by exact powers of two, which keeps the
//! mantissas of the stored entries untouched.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use std::ops::Mul;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Spectral (largest singular value) norm.
pub fn spectral_norm(m: &Matrix) -> f64 {
    match (m.nrows(), m.ncols()) {
        (0, _) | (_, 0) => 0.0,
        (1, 1) => m[(0, 0)].abs(),
        (2, 2) => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let s1 = (a + d).hypot(c - b);
            let s2 = (a - d).hypot(c + b);
            0.5 * (s1 + s2)
        }
        _ => m
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .fold(0.0_f64, |acc, &s| acc.max(s)),
    }
}

/// Natural log of the spectral norm, with `log 0 = -inf`.
pub fn log_spectral_norm(m: &Matrix) -> f64 {
    let s = spectral_norm(m);
    if s == 0.0 {
        f64::NEG_INFINITY
    } else {
        s.ln()
    }
}

/// Moduli of the (possibly complex) eigenvalues.
fn eigen_moduli(m: &Matrix) -> Vec<(f64, f64)> {
    let n = m.nrows();
    if n == 1 {
        return vec![(m[(0, 0)], 0.0)];
    }
    if n == 2 {
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let tr = a + d;
        let det = a * d - b * c;
        let disc = 0.25 * tr * tr - det;
        if disc >= 0.0 {
            let r = disc.sqrt();
            // avoid cancellation in the smaller root
            let big = 0.5 * tr + r.copysign(tr);
            let small = if big != 0.0 { det / big } else { 0.5 * tr - r.copysign(tr) };
            return vec![(big, 0.0), (small, 0.0)];
        }
        let im = (-disc).sqrt();
        return vec![(0.5 * tr, im), (0.5 * tr, -im)];
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect()
}

/// Spectral radius `max |eig|`.
pub fn spectral_radius(m: &Matrix) -> f64 {
    eigen_moduli(m)
        .into_iter()
        .fold(0.0_f64, |acc, (re, im)| acc.max(re.hypot(im)))
}

/// Largest real part over the spectrum; the growth rate of `exp(tG)`.
pub fn max_real_eigenvalue(m: &Matrix) -> f64 {
    eigen_moduli(m)
        .into_iter()
        .fold(f64::NEG_INFINITY, |acc, (re, _)| acc.max(re))
}

/// Logarithmic norm: the largest eigenvalue of the symmetric part.
/// Bounds `d/dt log‖x(t)‖` for `x' = Gx`.
pub fn logarithmic_norm(m: &Matrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    if sym.nrows() == 1 {
        return sym[(0, 0)];
    }
    sym.symmetric_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v))
}

fn is_all_zero<I: IntoIterator<Item = f64>>(entries: I) -> bool {
    entries.into_iter().all(|v| v == 0.0)
}

/// Multiply every entry by `2^k`. Exact unless the result leaves the
/// normal range.
fn scale_pow2(values: &mut [f64], k: i32) {
    let f = 2f64.powi(k);
    for v in values.iter_mut() {
        *v *= f;
    }
}

fn pow2_exponent_for(norm: f64) -> i32 {
    norm.log2().round() as i32
}

/// A matrix represented as `2^exponent · unit`, with `‖unit‖ ∈ [½, 2]`,
/// or exactly zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledMatrix {
    unit: Matrix,
    exponent: i64,
}

impl ScaledMatrix {
    pub fn identity(dim: usize) -> Self {
        ScaledMatrix {
            unit: Matrix::identity(dim, dim),
            exponent: 0,
        }
    }

    pub fn zero(dim: usize) -> Self {
        ScaledMatrix {
            unit: Matrix::zeros(dim, dim),
            exponent: 0,
        }
    }

    pub fn from_matrix(m: Matrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "scaled matrices are square");
        let mut s = ScaledMatrix { unit: m, exponent: 0 };
        s.renormalize();
        s
    }

    pub fn dim(&self) -> usize {
        self.unit.nrows()
    }

    pub fn unit(&self) -> &Matrix {
        &self.unit
    }

    /// Natural-log scale factor; the represented matrix is `e^{logscale}·unit`.
    pub fn logscale(&self) -> f64 {
        self.exponent as f64 * LN_2
    }

    pub fn is_zero(&self) -> bool {
        is_all_zero(self.unit.iter().copied())
    }

    /// `log ‖M‖`, `-inf` for the zero matrix.
    pub fn log_norm(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.logscale() + spectral_norm(&self.unit).ln()
    }

    /// Materialize the represented matrix (may overflow to ±inf).
    pub fn to_matrix(&self) -> Matrix {
        let mut m = self.unit.clone();
        if self.exponent != 0 {
            // apply in chunks so huge exponents saturate instead of panicking
            let mut e = self.exponent;
            while e != 0 {
                let step = e.clamp(-1000, 1000);
                scale_pow2(m.as_mut_slice(), step as i32);
                e -= step;
            }
        }
        m
    }

    /// Replace `self` with `a · self`.
    pub fn left_mul(&mut self, a: &Matrix) {
        if self.is_zero() {
            return;
        }
        self.unit = a * &self.unit;
        self.renormalize();
    }

    /// Replace `self` with `a · self` for a scaled left factor.
    pub fn left_mul_scaled(&mut self, a: &ScaledMatrix) {
        if self.is_zero() {
            return;
        }
        if a.is_zero() {
            *self = ScaledMatrix::zero(self.dim());
            return;
        }
        self.unit = &a.unit * &self.unit;
        self.exponent += a.exponent;
        self.renormalize();
    }

    /// Apply the represented matrix to a scaled vector.
    pub fn apply(&self, v: &ScaledVector) -> ScaledVector {
        if self.is_zero() || v.is_zero() {
            return ScaledVector::zero(self.dim());
        }
        let mut out = ScaledVector {
            unit: &self.unit * &v.unit,
            exponent: v.exponent + self.exponent,
        };
        out.renormalize();
        out
    }

    /// Multiply the represented matrix by `e^{c}`; only the unit part is
    /// rescaled by the non-binary remainder.
    pub fn scale_by_log(&mut self, c: f64) {
        if self.is_zero() {
            return;
        }
        self.unit *= c.exp();
        self.renormalize();
    }

    /// `‖self − other‖ / ‖self‖` computed at a common scale.
    pub fn relative_distance(&self, other: &ScaledMatrix) -> f64 {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => 0.0,
            (true, false) | (false, true) => f64::INFINITY,
            _ => {
                let shift = other.exponent - self.exponent;
                if shift.abs() > 60 {
                    return f64::INFINITY;
                }
                let mut o = other.unit.clone();
                scale_pow2(o.as_mut_slice(), shift as i32);
                spectral_norm(&(&self.unit - o)) / spectral_norm(&self.unit)
            }
        }
    }

    fn renormalize(&mut self) {
        let d = self.dim() as f64;
        let fro = self.unit.norm();
        if fro == 0.0 {
            self.unit.fill(0.0);
            self.exponent = 0;
            return;
        }
        assert!(fro.is_finite(), "non-finite entries in scaled product");
        // ‖·‖₂ ∈ [‖·‖_F / √d, ‖·‖_F]
        if fro <= 2.0 && fro >= 0.5 * d.sqrt() {
            return;
        }
        let sigma = spectral_norm(&self.unit);
        if (0.5..=2.0).contains(&sigma) {
            return;
        }
        let k = pow2_exponent_for(sigma);
        scale_pow2(self.unit.as_mut_slice(), -k);
        self.exponent += k as i64;
    }
}

impl Mul for &ScaledMatrix {
    type Output = ScaledMatrix;

    fn mul(self, rhs: &ScaledMatrix) -> ScaledMatrix {
        let mut out = rhs.clone();
        out.left_mul_scaled(self);
        out
    }
}

/// A vector represented as `2^exponent · unit`, with `‖unit‖ ∈ [½, 2]` or zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledVector {
    unit: Vector,
    exponent: i64,
}

impl ScaledVector {
    pub fn from_vector(v: Vector) -> Self {
        let mut s = ScaledVector { unit: v, exponent: 0 };
        s.renormalize();
        s
    }

    pub fn zero(dim: usize) -> Self {
        ScaledVector {
            unit: Vector::zeros(dim),
            exponent: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.unit.len()
    }

    pub fn is_zero(&self) -> bool {
        is_all_zero(self.unit.iter().copied())
    }

    /// `log ‖v‖`, `-inf` for the zero vector.
    pub fn log_norm(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.exponent as f64 * LN_2 + self.unit.norm().ln()
    }

    /// Unit-length direction (zero for the zero vector).
    pub fn direction(&self) -> Vector {
        let n = self.unit.norm();
        if n == 0.0 {
            self.unit.clone()
        } else {
            &self.unit / n
        }
    }

    pub fn to_vector(&self) -> Vector {
        let mut v = self.unit.clone();
        let mut e = self.exponent;
        while e != 0 {
            let step = e.clamp(-1000, 1000);
            scale_pow2(v.as_mut_slice(), step as i32);
            e -= step;
        }
        v
    }

    /// Replace `self` with `a · self`.
    pub fn left_mul(&mut self, a: &Matrix) {
        if self.is_zero() {
            return;
        }
        self.unit = a * &self.unit;
        self.renormalize();
    }

    /// Raw access for integrators: the unit part and its binary exponent.
    pub(crate) fn parts(&self) -> (&Vector, i64) {
        (&self.unit, self.exponent)
    }

    pub(crate) fn from_parts(unit: Vector, exponent: i64) -> Self {
        let mut s = ScaledVector { unit, exponent };
        s.renormalize();
        s
    }

    fn renormalize(&mut self) {
        let n = self.unit.norm();
        if n == 0.0 {
            self.unit.fill(0.0);
            self.exponent = 0;
            return;
        }
        assert!(n.is_finite(), "non-finite entries in scaled vector");
        if (0.5..=2.0).contains(&n) {
            return;
        }
        let k = pow2_exponent_for(n);
        scale_pow2(self.unit.as_mut_slice(), -k);
        self.exponent += k as i64;
    }
}

impl ScaledMatrix {
    pub(crate) fn parts(&self) -> (&Matrix, i64) {
        (&self.unit, self.exponent)
    }

    pub(crate) fn from_parts(unit: Matrix, exponent: i64) -> Self {
        let mut s = ScaledMatrix { unit, exponent };
        s.renormalize();
        s
    }
}

/// Running `log Σ e^{v_i}` without overflow.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.scaled += (log_term - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// `log(e^a + e^b)`.
pub fn log_add(a: f64, b: f64) -> f64 {
    let mut acc = LogSumExp::default();
    acc.add(a);
    acc.add(b);
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        let n = rows.len();
        Matrix::from_fn(n, rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn spectral_norm_two_by_two_matches_svd() {
        let m = mat(&[&[0.5, 0.4], &[0.0, 0.5]]);
        let svd = m.clone().svd(false, false).singular_values.max();
        assert!((spectral_norm(&m) - svd).abs() < 1e-15);
        assert!((spectral_norm(&m) - 0.738_516_480_713_450_4).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_of_triangular_is_diagonal_max() {
        let m = mat(&[&[0.5, 1.0], &[0.0, 0.5]]);
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-12);
        let rot = mat(&[&[0.0, -2.0], &[2.0, 0.0]]);
        assert!((spectral_radius(&rot) - 2.0).abs() < 1e-12);
        let three = mat(&[&[0.1, 0.0, 0.0], &[0.0, -3.0, 0.0], &[0.0, 0.0, 2.0]]);
        assert!((spectral_radius(&three) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn million_factor_product_keeps_exact_log() {
        let a = Matrix::identity(2, 2) * 0.5;
        let mut p = ScaledMatrix::identity(2);
        for _ in 0..1_000_000 {
            p.left_mul(&a);
        }
        let expected = 1_000_000.0 * 0.5f64.ln();
        assert!((p.log_norm() - expected).abs() < 1e-12 * expected.abs());
        let (unit, _) = p.parts();
        let s = spectral_norm(unit);
        assert!((0.5..=2.0).contains(&s));
    }

    #[test]
    fn zero_is_absorbing() {
        let nil = mat(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let mut p = ScaledMatrix::identity(2);
        p.left_mul(&nil);
        assert!(!p.is_zero());
        p.left_mul(&nil);
        assert!(p.is_zero());
        assert_eq!(p.log_norm(), f64::NEG_INFINITY);
        p.left_mul(&Matrix::identity(2, 2));
        assert!(p.is_zero());
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        let mut acc = LogSumExp::default();
        assert_eq!(acc.value(), f64::NEG_INFINITY);
        acc.add(1000.0);
        acc.add(1000.0);
        assert!((acc.value() - (1000.0 + LN_2)).abs() < 1e-12);
        acc.add(f64::NEG_INFINITY);
        assert!((acc.value() - (1000.0 + LN_2)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip_through_identity_preserves_entries(
            entries in proptest::collection::vec(-1e6f64..1e6, 9),
        ) {
            let m = Matrix::from_vec(3, 3, entries);
            prop_assume!(m.norm() > 1e-12);
            let mut s = ScaledMatrix::from_matrix(m.clone());
            s.left_mul(&Matrix::identity(3, 3));
            let back = s.to_matrix();
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300));
            }
            let (unit, _) = s.parts();
            let sigma = spectral_norm(unit);
            prop_assert!((0.5..=2.0).contains(&sigma));
        }

        #[test]
        fn scaled_products_are_associative(
            a in proptest::collection::vec(-3.0f64..3.0, 4),
            b in proptest::collection::vec(-3.0f64..3.0, 4),
            c in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let (a, b, c) = (
                ScaledMatrix::from_matrix(Matrix::from_vec(2, 2, a)),
                ScaledMatrix::from_matrix(Matrix::from_vec(2, 2, b)),
                ScaledMatrix::from_matrix(Matrix::from_vec(2, 2, c)),
            );
            let left = &(&a * &b) * &c;
            let right = &a * &(&b * &c);
            prop_assume!(!left.is_zero());
            let scale = left.log_norm();
            prop_assume!(scale > -20.0);
            // cancellation makes small products ill-conditioned; compare
            // relative to the product of factor norms
            let bound = (a.log_norm() + b.log_norm() + c.log_norm() - scale).exp();
            prop_assert!(left.relative_distance(&right) <= 3e-12 * bound.max(1.0));
        }
    }
}
