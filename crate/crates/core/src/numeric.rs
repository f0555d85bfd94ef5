//! Dense complex matrices, factorizations and seeded randomness.
//!
//! Exact rational matrices live in [`crate::exact`]; the two domains are
//! never mixed inside one matrix.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default relative tolerance for float comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

const SCHUR_MAX_ITER: usize = 10_000;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Builds a complex matrix from real row-major entries.
pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> CMatrix {
    assert_eq!(entries.len(), rows * cols);
    CMatrix::from_fn(rows, cols, |i, j| c(entries[i * cols + j]))
}

pub fn diag(values: &[f64]) -> CMatrix {
    let d = values.len();
    CMatrix::from_fn(d, d, |i, j| if i == j { c(values[i]) } else { C64::default() })
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if !is_finite(m) {
        return Err(Error::NonFinite);
    }
    Ok(m.nrows())
}

/// `L = left_frame · diag(singular_values) · right_frame^*`.
///
/// Columns of `right_frame` are the right singular vectors, so its first
/// ℓ columns span the most expanded ℓ-subspace.
#[derive(Clone, Debug)]
pub struct SingularData {
    pub singular_values: Vec<f64>,
    pub left_frame: CMatrix,
    pub right_frame: CMatrix,
}

impl SingularData {
    pub fn reconstruct(&self) -> CMatrix {
        let d = self.singular_values.len();
        let s = CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                c(self.singular_values[i])
            } else {
                C64::default()
            }
        });
        &self.left_frame * s * self.right_frame.adjoint()
    }
}

pub fn singular_decomposition(l: &CMatrix) -> Result<SingularData> {
    check_square(l)?;
    let f = svd(l)?;
    Ok(SingularData {
        singular_values: f.singular_values,
        left_frame: f.u,
        right_frame: f.v,
    })
}

/// Full SVD M = U diag(s) V*, singular values in decreasing order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

fn to_faer(m: &CMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// nalgebra's bidiagonal SVD mishandles rank-deficient inputs, so SVDs go
/// through faer.
pub fn svd(m: &CMatrix) -> Result<Svd> {
    if !is_finite(m) {
        return Err(Error::NonFinite);
    }
    let f = to_faer(m).svd().map_err(|_| Error::NonFinite)?;
    let singular_values = f.S().column_vector().iter().map(|z| z.re).collect();
    Ok(Svd {
        u: from_faer(f.U()),
        singular_values,
        v: from_faer(f.V()),
    })
}

/// Singular values in decreasing order; empty for an empty matrix.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s = to_faer(m).singular_values().unwrap_or_else(|_| vec![f64::NAN; m.nrows().min(m.ncols())]);
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn real_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    singular_values(&m.map(c))
}

#[derive(Clone, Debug)]
pub struct EigenData {
    pub eigenvalues: Vec<C64>,
    /// Unit-norm eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: CMatrix,
    /// max over pairs of ‖Bv − λv‖ / (‖B‖‖v‖).
    pub max_residual: f64,
}

/// Modulus descending, then argument ascending. Moduli that agree to
/// 1e-12 relative count as tied.
pub fn eigen_order(a: &C64, b: &C64) -> Ordering {
    let (ma, mb) = (a.norm(), b.norm());
    let scale = ma.max(mb).max(f64::MIN_POSITIVE);
    if (ma - mb).abs() > 1e-12 * scale {
        mb.partial_cmp(&ma).unwrap_or(Ordering::Equal)
    } else {
        a.arg().partial_cmp(&b.arg()).unwrap_or(Ordering::Equal)
    }
}

pub fn eigen_decomposition(b: &CMatrix) -> Result<EigenData> {
    let d = check_square(b)?;
    let schur = b
        .clone()
        .try_schur(f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(Error::EigenDiverged {
            iterations: SCHUR_MAX_ITER,
        })?;
    let (q, t) = schur.unpack();
    let norm_b = frobenius(b).max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * norm_b;

    let mut pairs: Vec<(C64, CVector)> = Vec::with_capacity(d);
    for i in 0..d {
        let lambda = t[(i, i)];
        // Back-substitution on the triangular factor with y_i = 1.
        let mut y = CVector::zeros(d);
        y[i] = c(1.0);
        for j in (0..i).rev() {
            let mut s = C64::default();
            for k in j + 1..=i {
                s += t[(j, k)] * y[k];
            }
            let mut den = t[(j, j)] - lambda;
            if den.norm() < small {
                den = c(small);
            }
            y[j] = -s / den;
        }
        let mut v = &q * y;
        let n = v.norm();
        v /= c(n);
        pairs.push((lambda, v));
    }
    pairs.sort_by(|a, b| eigen_order(&a.0, &b.0));

    let mut max_residual: f64 = 0.0;
    for (lambda, v) in &pairs {
        let r = (b * v - v * *lambda).norm() / norm_b;
        max_residual = max_residual.max(r);
    }
    let eigenvalues = pairs.iter().map(|p| p.0).collect();
    let eigenvectors = CMatrix::from_fn(d, d, |i, j| pairs[j].1[i]);
    Ok(EigenData {
        eigenvalues,
        eigenvectors,
        max_residual,
    })
}

/// Seed plus stream identifier; equal pairs give equal draw sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct RandomSource {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Independent source for sub-task `k`.
    pub fn substream(&self, k: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: self
                .stream_id
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(k + 1),
        }
    }
}

pub fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian_c64(rng))
}

pub fn gaussian_real_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| c(rng.sample(StandardNormal)))
}

/// Haar-distributed unitary (QR of a Ginibre matrix with phase fix).
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    let g = gaussian_matrix(rng, d, d);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let p = r[(j, j)];
        let phase = if p.norm() > 0.0 { p / p.norm() } else { c(1.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Orthonormal basis (columns) of the column span, by Gram–Schmidt with
/// re-orthogonalization. Fails if the columns are dependent within `tol`.
pub fn orthonormalize(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let (rows, cols) = m.shape();
    let mut out = CMatrix::zeros(rows, cols);
    let scale = frobenius(m).max(f64::MIN_POSITIVE);
    for j in 0..cols {
        let mut v = m.column(j).into_owned();
        for _ in 0..2 {
            for k in 0..j {
                let e = out.column(k);
                let p = e.dotc(&v);
                v -= e * p;
            }
        }
        let n = v.norm();
        if n <= tol * scale {
            return Err(Error::RankDeficient {
                rank: j,
                expected: cols,
            });
        }
        out.set_column(j, &(v / c(n)));
    }
    Ok(out)
}

/// Numerical rank from singular values relative to the largest.
pub fn numerical_rank(m: &CMatrix, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = singular_values(m);
    let top = sv[0];
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * top).count()
}

/// Inverse via LU; errors if singular.
pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    check_square(m)?;
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("LU pivot vanished".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn svd_identity_and_diagonal() {
        let s = singular_decomposition(&identity(3)).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0, 1.0]);
        let s = singular_decomposition(&diag(&[1.0, 4.0, 5.0, 2.0])).unwrap();
        for (a, b) in s.singular_values.iter().zip([5.0, 4.0, 2.0, 1.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn svd_reconstructs_random() {
        let mut rng = RandomSource::new(7, 0).rng();
        for _ in 0..20 {
            let l = gaussian_matrix(&mut rng, 5, 5);
            let s = singular_decomposition(&l).unwrap();
            let cond = s.singular_values[0] / s.singular_values[4];
            if cond > 1e6 {
                continue;
            }
            let err = frobenius(&(s.reconstruct() - &l)) / frobenius(&l);
            assert!(err < 1e-10, "residual {err}");
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_rejects_bad_input() {
        let m = CMatrix::zeros(2, 3);
        assert!(matches!(
            singular_decomposition(&m),
            Err(Error::NonSquare { .. })
        ));
        let m = real_matrix(1, 1, &[f64::NAN]);
        assert_eq!(singular_decomposition(&m).unwrap_err(), Error::NonFinite);
    }

    #[test]
    fn unitary_has_unit_singular_values() {
        let mut rng = RandomSource::new(3, 1).rng();
        let u = random_unitary(&mut rng, 6);
        let s = singular_decomposition(&u).unwrap();
        for v in s.singular_values {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_of_projectors_recomposes() {
        let mut rng = RandomSource::new(3, 2).rng();
        for d in 2..=10 {
            let q = random_unitary(&mut rng, d);
            let b = q.columns(0, d / 2).into_owned();
            let p = CMatrix::identity(d, d) - &b * b.adjoint();
            let f = svd(&p).unwrap();
            let s = CMatrix::from_diagonal(&CVector::from_iterator(d, f.singular_values.iter().map(|&x| c(x))));
            assert!(frobenius(&(&f.u * s * f.v.adjoint() - &p)) < 1e-12, "d = {d}");
            assert!(f.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn eigen_diagonal() {
        let e = eigen_decomposition(&diag(&[1.0, 3.0, 2.0])).unwrap();
        let vals: Vec<f64> = e.eigenvalues.iter().map(|z| z.re).collect();
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        assert!(e.max_residual < 1e-14);
    }

    #[test]
    fn eigen_rotation() {
        let t = PI / 3.0;
        let r = real_matrix(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        let e = eigen_decomposition(&r).unwrap();
        assert_relative_eq!(e.eigenvalues[0].norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.eigenvalues[1].norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.eigenvalues[0].arg(), -t, epsilon = 1e-12);
        assert_relative_eq!(e.eigenvalues[1].arg(), t, epsilon = 1e-12);
        assert!(e.max_residual < 1e-12);
    }

    #[test]
    fn eigen_golden_companion() {
        let m = real_matrix(2, 2, &[0.0, 1.0, 1.0, 1.0]);
        let e = eigen_decomposition(&m).unwrap();
        // roots of x^2 - x - 1
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_relative_eq!(e.eigenvalues[0].re, phi, epsilon = 1e-12);
        assert_relative_eq!(e.eigenvalues[1].re, -1.0 / phi, epsilon = 1e-12);
        assert!(e.eigenvalues.iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn eigen_random_residuals() {
        let mut rng = RandomSource::new(11, 0).rng();
        for d in 1..=6 {
            let b = gaussian_matrix(&mut rng, d, d);
            let e = eigen_decomposition(&b).unwrap();
            assert!(e.max_residual < 1e-10, "d={d} residual {}", e.max_residual);
            for w in e.eigenvalues.windows(2) {
                assert_ne!(eigen_order(&w[0], &w[1]), Ordering::Greater);
            }
        }
    }

    #[test]
    fn random_source_reproducible() {
        let a: Vec<u64> = {
            let mut r = RandomSource::new(42, 3).rng();
            (0..8).map(|_| r.random()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RandomSource::new(42, 3).rng();
            (0..8).map(|_| r.random()).collect()
        };
        let other: Vec<u64> = {
            let mut r = RandomSource::new(42, 4).rng();
            (0..8).map(|_| r.random()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    #[test]
    fn orthonormalize_detects_dependence() {
        let m = real_matrix(3, 2, &[1.0, 2.0, 0.0, 0.0, 1.0, 2.0]);
        assert!(orthonormalize(&m, 1e-12).is_err());
        let m = real_matrix(3, 2, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let q = orthonormalize(&m, 1e-12).unwrap();
        let g = q.adjoint() * &q;
        assert!(frobenius(&(g - identity(2))) < 1e-14);
    }
}
