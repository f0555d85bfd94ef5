//! Exterior powers, Plücker coordinates, hyperplane sections, eccentricity
//! and quasi-projective maps.
//!
//! Subsets are stored 0-based and ordered lexicographically; they print
//! 1-based.

use std::fmt;

use itertools::Itertools;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::exact::{QMatrix, Rational};
use crate::numeric::{c, numerical_rank, orthonormalize, singular_decomposition, singular_values, svd, CMatrix, C64};

/// Absolute tolerance for the quadratic Plücker relations on unit vectors.
pub const PLUCKER_TOL: f64 = 1e-8;

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All ℓ-subsets of {0..d-1}, lexicographic.
pub fn subsets(d: usize, ell: usize) -> Vec<Vec<usize>> {
    (0..d).combinations(ell).collect()
}

/// Position of a sorted subset in the lexicographic order of [`subsets`].
pub fn subset_rank(members: &[usize], d: usize) -> usize {
    let ell = members.len();
    let mut rank = 0;
    let mut next = 0;
    for (i, &m) in members.iter().enumerate() {
        for v in next..m {
            rank += binomial(d - 1 - v, ell - 1 - i);
        }
        next = m + 1;
    }
    rank
}

/// Sign of the permutation that sorts the concatenation `a ++ b` of two
/// disjoint sorted lists.
pub(crate) fn merge_sign(a: &[usize], b: &[usize]) -> f64 {
    let mut inversions = 0;
    for &x in a {
        inversions += b.iter().filter(|&&y| y < x).count();
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSubset {
    members: Vec<usize>,
    d: usize,
}

impl IndexSubset {
    /// From 0-based members.
    pub fn new(members: Vec<usize>, d: usize) -> Result<Self> {
        if members.windows(2).any(|w| w[0] >= w[1]) || members.iter().any(|&m| m >= d) {
            return Err(Error::DegreeOutOfRange(format!(
                "{members:?} is not a strictly increasing subset of 0..{d}"
            )));
        }
        Ok(Self { members, d })
    }

    pub fn from_one_based(members: &[usize], d: usize) -> Result<Self> {
        if members.contains(&0) {
            return Err(Error::DegreeOutOfRange("1-based subset contains 0".into()));
        }
        Self::new(members.iter().map(|m| m - 1).collect(), d)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.members.iter().map(|m| m + 1).collect()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn rank(&self) -> usize {
        subset_rank(&self.members, self.d)
    }

    pub fn complement(&self) -> Self {
        Self {
            members: (0..self.d).filter(|i| !self.members.contains(i)).collect(),
            d: self.d,
        }
    }
}

impl fmt::Display for IndexSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.one_based().iter().join(","))
    }
}

/// Element of Λ^ℓ C^d, coefficients indexed by subset rank.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiVector {
    d: usize,
    ell: usize,
    coeffs: Vec<C64>,
}

impl MultiVector {
    pub fn zeros(d: usize, ell: usize) -> Self {
        Self {
            d,
            ell,
            coeffs: vec![C64::zero(); binomial(d, ell)],
        }
    }

    pub fn from_coeffs(d: usize, ell: usize, coeffs: Vec<C64>) -> Result<Self> {
        if ell > d || coeffs.len() != binomial(d, ell) {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for degree {ell} in dimension {d}",
                coeffs.len()
            )));
        }
        Ok(Self { d, ell, coeffs })
    }

    /// e_{i1} ∧ … ∧ e_{iℓ} for 0-based sorted members.
    pub fn basis(d: usize, members: &[usize]) -> Self {
        let mut m = Self::zeros(d, members.len());
        m.coeffs[subset_rank(members, d)] = c(1.0);
        m
    }

    pub fn from_vector(v: &[C64]) -> Self {
        Self {
            d: v.len(),
            ell: 1,
            coeffs: v.to_vec(),
        }
    }

    /// ω₁ ∧ … ∧ ω_ℓ for the columns of a d×ℓ matrix.
    pub fn wedge_columns(basis: &CMatrix) -> Self {
        let (d, ell) = basis.shape();
        let all: Vec<usize> = (0..ell).collect();
        let coeffs = subsets(d, ell)
            .iter()
            .map(|rows| minor(basis, rows, &all))
            .collect();
        Self { d, ell, coeffs }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, members: &[usize]) -> C64 {
        self.coeffs[subset_rank(members, self.d)]
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.norm() <= tol
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            d: self.d,
            ell: self.ell,
            coeffs: self.coeffs.iter().map(|z| z * s).collect(),
        }
    }

    /// Hermitian inner product, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.d, self.ell), (other.d, other.ell));
        Self {
            d: self.d,
            ell: self.ell,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn as_column(&self) -> CMatrix {
        CMatrix::from_column_slice(self.coeffs.len(), 1, &self.coeffs)
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.d != other.d || self.ell + other.ell > self.d {
            return Err(Error::DegreeMismatch {
                ell: self.ell,
                codegree: other.ell,
                d: self.d,
            });
        }
        let d = self.d;
        let mut out = Self::zeros(d, self.ell + other.ell);
        let left = subsets(d, self.ell);
        let right = subsets(d, other.ell);
        for (i, a) in left.iter().enumerate() {
            let ca = self.coeffs[i];
            if ca.is_zero() {
                continue;
            }
            for (j, b) in right.iter().enumerate() {
                let cb = other.coeffs[j];
                if cb.is_zero() || a.iter().any(|x| b.contains(x)) {
                    continue;
                }
                let mut merged: Vec<usize> = a.iter().chain(b).copied().collect();
                merged.sort_unstable();
                out.coeffs[subset_rank(&merged, d)] += ca * cb * merge_sign(a, b);
            }
        }
        Ok(out)
    }

    /// Largest violation of the quadratic Plücker relations after unit
    /// normalization. Zero for decomposable vectors.
    pub fn plucker_residual(&self) -> f64 {
        let n = self.norm();
        if n == 0.0 || self.ell <= 1 || self.ell + 1 >= self.d {
            return 0.0;
        }
        let d = self.d;
        let signed = |base: &[usize], extra: usize| -> C64 {
            if base.contains(&extra) {
                return C64::zero();
            }
            let above = base.iter().filter(|&&x| x > extra).count();
            let mut s: Vec<usize> = base.to_vec();
            s.push(extra);
            s.sort_unstable();
            let v = self.coeffs[subset_rank(&s, d)] / n;
            if above % 2 == 0 {
                v
            } else {
                -v
            }
        };
        let mut worst: f64 = 0.0;
        for a in (0..d).combinations(self.ell - 1) {
            for b in (0..d).combinations(self.ell + 1) {
                let mut sum = C64::zero();
                for k in 0..b.len() {
                    let x = signed(&a, b[k]);
                    if x.is_zero() {
                        continue;
                    }
                    let mut rest = b.clone();
                    rest.remove(k);
                    let y = self.coeffs[subset_rank(&rest, d)] / n;
                    let term = x * y;
                    if k % 2 == 0 {
                        sum += term;
                    } else {
                        sum -= term;
                    }
                }
                worst = worst.max(sum.norm());
            }
        }
        worst
    }

    pub fn is_decomposable(&self) -> bool {
        self.plucker_residual() <= PLUCKER_TOL
    }

    /// Unit norm, first nonzero coordinate real positive.
    pub fn canonical(&self) -> Option<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        let cutoff = 1e-12 * n;
        let lead = self.coeffs.iter().find(|z| z.norm() > cutoff)?;
        let phase = lead.conj() / lead.norm();
        Some(self.scaled(phase / n))
    }
}

fn minor(m: &CMatrix, rows: &[usize], cols: &[usize]) -> C64 {
    let k = rows.len();
    match k {
        0 => c(1.0),
        1 => m[(rows[0], cols[0])],
        2 => {
            m[(rows[0], cols[0])] * m[(rows[1], cols[1])]
                - m[(rows[0], cols[1])] * m[(rows[1], cols[0])]
        }
        _ => CMatrix::from_fn(k, k, |i, j| m[(rows[i], cols[j])]).determinant(),
    }
}

/// Matrix of ℓ×ℓ minors, rows and columns indexed by subsets in
/// lexicographic order.
pub fn exterior_power(l: &CMatrix, ell: usize) -> Result<CMatrix> {
    if l.nrows() != l.ncols() {
        return Err(Error::NonSquare {
            rows: l.nrows(),
            cols: l.ncols(),
        });
    }
    let d = l.nrows();
    if ell == 0 || ell > d {
        return Err(Error::DegreeOutOfRange(format!("ell = {ell} with d = {d}")));
    }
    let subs = subsets(d, ell);
    let n = subs.len();
    Ok(CMatrix::from_fn(n, n, |i, j| minor(l, &subs[i], &subs[j])))
}

pub fn exterior_power_exact(l: &QMatrix, ell: usize) -> Result<QMatrix> {
    if !l.is_square() {
        return Err(Error::NonSquare {
            rows: l.nrows(),
            cols: l.ncols(),
        });
    }
    let d = l.nrows();
    if ell == 0 || ell > d {
        return Err(Error::DegreeOutOfRange(format!("ell = {ell} with d = {d}")));
    }
    let subs = subsets(d, ell);
    let n = subs.len();
    let mut out = QMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = l.submatrix(&subs[i], &subs[j]).determinant()?;
        }
    }
    Ok(out)
}

/// Projective class of a decomposable ℓ-vector, canonically normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct GrassmannPoint {
    plucker: MultiVector,
}

impl GrassmannPoint {
    pub fn from_multivector(mv: &MultiVector) -> Result<Self> {
        let plucker = mv.canonical().ok_or(Error::RankDeficient {
            rank: 0,
            expected: mv.ell,
        })?;
        let residual = plucker.plucker_residual();
        if residual > PLUCKER_TOL {
            return Err(Error::NotDecomposable { residual });
        }
        Ok(Self { plucker })
    }

    pub fn plucker(&self) -> &MultiVector {
        &self.plucker
    }

    pub fn d(&self) -> usize {
        self.plucker.d
    }

    pub fn ell(&self) -> usize {
        self.plucker.ell
    }

    /// Fubini–Study angle in [0, π/2].
    pub fn fs_distance(&self, other: &Self) -> f64 {
        fs_distance(&self.plucker, &other.plucker)
    }

    /// Equality of canonical representatives within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.plucker
            .coeffs
            .iter()
            .zip(&other.plucker.coeffs)
            .all(|(a, b)| (a - b).norm() <= tol)
    }

    /// Orthonormal d×ℓ basis of the subspace: the kernel of v ↦ v ∧ ω.
    pub fn basis(&self) -> CMatrix {
        let (d, ell) = (self.d(), self.ell());
        if ell == d {
            return CMatrix::identity(d, d);
        }
        let rows = binomial(d, ell + 1).max(d);
        let mut m = CMatrix::zeros(rows, d);
        for j in 0..d {
            let e = MultiVector::basis(d, &[j]);
            let w = e.wedge(&self.plucker).expect("degrees fit");
            for (i, z) in w.coeffs.iter().enumerate() {
                m[(i, j)] = *z;
            }
        }
        let v = svd(&m).expect("finite wedge map").v;
        v.columns(d - ell, ell).into_owned()
    }

    /// Orthonormal d×(d−ℓ) basis of the orthogonal complement.
    pub fn complement_basis(&self) -> CMatrix {
        orthogonal_complement(&self.basis())
    }
}

/// Orthonormal basis of the orthogonal complement of the column span of a
/// matrix with orthonormal columns.
pub fn orthogonal_complement(q: &CMatrix) -> CMatrix {
    let (d, ell) = q.shape();
    let p = CMatrix::identity(d, d) - q * q.adjoint();
    let s = singular_decomposition(&p).expect("square finite projector");
    s.left_frame.columns(0, d - ell).into_owned()
}

/// Angle between the lines through two nonzero multivectors.
pub fn fs_distance(a: &MultiVector, b: &MultiVector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    let ua = a.scaled(c(1.0 / na));
    let ub = b.scaled(c(1.0 / nb));
    let ip = ua.inner(&ub);
    let resid = ub.add(&ua.scaled(-ip)).norm();
    resid.atan2(ip.norm())
}

pub fn plucker_embed(basis_columns: &CMatrix) -> Result<GrassmannPoint> {
    let (d, ell) = basis_columns.shape();
    if ell == 0 || ell > d {
        return Err(Error::DegreeOutOfRange(format!("{ell} columns in dimension {d}")));
    }
    let rank = numerical_rank(basis_columns, 1e-12);
    if rank < ell {
        return Err(Error::RankDeficient {
            rank,
            expected: ell,
        });
    }
    // Orthonormalizing first keeps the minors well scaled.
    let q = orthonormalize(basis_columns, 1e-12)?;
    GrassmannPoint::from_multivector(&MultiVector::wedge_columns(&q))
}

/// Set of ℓ-subspaces meeting the (d−ℓ)-subspace of `defining`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperplaneSection {
    defining: MultiVector,
}

impl HyperplaneSection {
    pub fn new(defining: MultiVector) -> Result<Self> {
        let defining = defining.canonical().ok_or(Error::RankDeficient {
            rank: 0,
            expected: defining.ell,
        })?;
        let residual = defining.plucker_residual();
        if residual > PLUCKER_TOL {
            return Err(Error::NotDecomposable { residual });
        }
        Ok(Self { defining })
    }

    /// Section of subspaces meeting the span of the given columns.
    pub fn from_basis(columns: &CMatrix) -> Result<Self> {
        Ok(Self {
            defining: plucker_embed(columns)?.plucker,
        })
    }

    /// Subspaces that meet the orthogonal complement of ξ, i.e. are not
    /// transverse to ξ^⊥.
    pub fn orthogonal_to(xi: &GrassmannPoint) -> Result<Self> {
        Self::from_basis(&xi.complement_basis())
    }

    pub fn defining(&self) -> &MultiVector {
        &self.defining
    }

    /// |ω ∧ υ| for unit ω.
    pub fn wedge_value(&self, omega: &MultiVector) -> Result<f64> {
        if omega.ell + self.defining.ell != omega.d || omega.d != self.defining.d {
            return Err(Error::DegreeMismatch {
                ell: omega.ell,
                codegree: self.defining.ell,
                d: omega.d,
            });
        }
        let w = omega.wedge(&self.defining)?;
        Ok(w.coeffs[0].norm() / omega.norm().max(f64::MIN_POSITIVE))
    }

    pub fn contains(&self, xi: &GrassmannPoint, tol: f64) -> Result<bool> {
        Ok(self.wedge_value(&xi.plucker)? <= tol)
    }

    /// Membership for arbitrary (possibly non-decomposable) ℓ-vectors.
    pub fn contains_vector(&self, omega: &MultiVector, tol: f64) -> Result<bool> {
        Ok(self.wedge_value(omega)? <= tol)
    }
}

pub fn hyperplane_contains(section: &HyperplaneSection, xi: &GrassmannPoint) -> Result<bool> {
    section.contains(xi, 1e-9)
}

#[derive(Clone, Debug)]
pub struct Eccentricity {
    pub value: f64,
    pub most_expanded: GrassmannPoint,
    /// False when a_ℓ = a_{ℓ+1}: the most expanded subspace is not unique.
    pub unique: bool,
}

pub fn eccentricity(l: &CMatrix, ell: usize) -> Result<Eccentricity> {
    let s = singular_decomposition(l)?;
    let d = s.singular_values.len();
    if ell == 0 || ell >= d {
        return Err(Error::DegreeOutOfRange(format!("ell = {ell} with d = {d}")));
    }
    let a = &s.singular_values;
    if a[d - 1] <= 1e-14 * a[0] {
        return Err(Error::Singular("eccentricity of a singular matrix".into()));
    }
    let value = (a[ell - 1] / a[ell]).max(1.0);
    let top = s.right_frame.columns(0, ell).into_owned();
    Ok(Eccentricity {
        value,
        most_expanded: plucker_embed(&top)?,
        unique: value > 1.0 + 1e-12,
    })
}

/// m(L|ξ) / ‖L|ξ^⊥‖: at most the eccentricity, with equality at the most
/// expanded subspace.
pub fn expansion_ratio(l: &CMatrix, xi: &GrassmannPoint) -> f64 {
    let inner = l * xi.basis();
    let outer = l * xi.complement_basis();
    let conorm = singular_values(&inner).last().copied().unwrap_or(f64::INFINITY);
    let norm = singular_values(&outer).first().copied().unwrap_or(0.0);
    conorm / norm
}

/// Norm-one linear map on Λ^ℓ C^d, possibly non-invertible.
#[derive(Clone, Debug)]
pub struct QuasiProjectiveMap {
    carrier: CMatrix,
    d: usize,
    ell: usize,
    kernel_basis: Vec<MultiVector>,
}

/// Result of [`kernel_hyperplane`].
#[derive(Clone, Debug, PartialEq)]
pub enum KernelSection {
    Empty,
    Section(HyperplaneSection),
}

impl QuasiProjectiveMap {
    /// Normalizes `carrier` to operator norm 1 and records its kernel.
    pub fn new(carrier: &CMatrix, d: usize, ell: usize, tol: f64) -> Result<Self> {
        let n = binomial(d, ell);
        if carrier.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "carrier is {:?}, expected {n}x{n}",
                carrier.shape()
            )));
        }
        let s = singular_decomposition(carrier)?;
        let top = s.singular_values[0];
        if top == 0.0 {
            return Err(Error::Singular("zero carrier".into()));
        }
        let carrier = carrier / c(top);
        let kernel_basis = (0..n)
            .filter(|&k| s.singular_values[k] <= tol * top)
            .map(|k| {
                let col: Vec<C64> = s.right_frame.column(k).iter().copied().collect();
                MultiVector::from_coeffs(d, ell, col).expect("sizes agree")
            })
            .collect();
        Ok(Self {
            carrier,
            d,
            ell,
            kernel_basis,
        })
    }

    /// Λ^ℓ L, normalized.
    pub fn from_linear(l: &CMatrix, ell: usize) -> Result<Self> {
        let p = exterior_power(l, ell)?;
        Self::new(&p, l.nrows(), ell, 1e-12)
    }

    pub fn carrier(&self) -> &CMatrix {
        &self.carrier
    }

    pub fn kernel_basis(&self) -> &[MultiVector] {
        &self.kernel_basis
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn apply_vector(&self, omega: &MultiVector) -> MultiVector {
        let img = &self.carrier * omega.as_column();
        MultiVector::from_coeffs(self.d, self.ell, img.iter().copied().collect())
            .expect("carrier is square of the right size")
    }
}

pub fn quasi_projective_apply(qm: &QuasiProjectiveMap, xi: &GrassmannPoint) -> Result<GrassmannPoint> {
    if xi.ell() != qm.ell || xi.d() != qm.d {
        return Err(Error::DegreeMismatch {
            ell: xi.ell(),
            codegree: qm.d - qm.ell,
            d: qm.d,
        });
    }
    let img = qm.apply_vector(&xi.plucker);
    let norm = img.norm();
    if norm <= 1e-12 {
        return Err(Error::InKernel { norm });
    }
    GrassmannPoint::from_multivector(&img)
}

/// A hyperplane section containing the projectivized kernel.
///
/// With ζ the top right singular vector of the carrier, every kernel vector
/// is orthogonal to ζ; when ζ is decomposable, a decomposable ω is
/// orthogonal to ζ exactly when its subspace meets the orthogonal
/// complement of ζ's subspace.
pub fn kernel_hyperplane(qm: &QuasiProjectiveMap) -> Result<KernelSection> {
    if qm.kernel_basis.is_empty() {
        return Ok(KernelSection::Empty);
    }
    let s = singular_decomposition(&qm.carrier)?;
    let col: Vec<C64> = s.right_frame.column(0).iter().copied().collect();
    let zeta = MultiVector::from_coeffs(qm.d, qm.ell, col)?;
    let zeta = GrassmannPoint::from_multivector(&zeta).map_err(|_| {
        Error::Precondition("top singular vector of the carrier is not decomposable".into())
    })?;
    Ok(KernelSection::Section(HyperplaneSection::orthogonal_to(&zeta)?))
}

/// Determinant-free exact Plücker coordinates: minors of a rational basis.
pub fn plucker_exact(basis: &QMatrix) -> Result<Vec<Rational>> {
    let (d, ell) = (basis.nrows(), basis.ncols());
    let cols: Vec<usize> = (0..ell).collect();
    subsets(d, ell)
        .iter()
        .map(|rows| basis.submatrix(rows, &cols).determinant())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{diag, frobenius, gaussian_matrix, identity, random_unitary, real_matrix, RandomSource};
    use proptest::prelude::*;

    fn e(d: usize, i: usize) -> CMatrix {
        let mut v = CMatrix::zeros(d, 1);
        v[(i, 0)] = c(1.0);
        v
    }

    fn cols(vs: &[CMatrix]) -> CMatrix {
        let d = vs[0].nrows();
        CMatrix::from_fn(d, vs.len(), |i, j| vs[j][(i, 0)])
    }

    #[test]
    fn ranks_are_lexicographic() {
        for d in 1..=7 {
            for ell in 0..=d {
                let all = subsets(d, ell);
                assert_eq!(all.len(), binomial(d, ell));
                for (k, s) in all.iter().enumerate() {
                    assert_eq!(subset_rank(s, d), k);
                }
            }
        }
    }

    #[test]
    fn identity_power_is_identity() {
        let p = exterior_power(&identity(4), 2).unwrap();
        assert_eq!(p.shape(), (6, 6));
        assert!(frobenius(&(p - identity(6))) == 0.0);
    }

    #[test]
    fn diagonal_power() {
        let a = [2.0, 3.0, 5.0, 7.0];
        let p = exterior_power(&diag(&a), 2).unwrap();
        for (k, s) in subsets(4, 2).iter().enumerate() {
            let expect: f64 = s.iter().map(|&i| a[i]).product();
            assert_eq!(p[(k, k)].re, expect);
        }
        assert!(exterior_power(&diag(&a), 5).is_err());
        assert!(exterior_power(&diag(&a), 0).is_err());
    }

    #[test]
    fn embed_coordinate_plane() {
        let g = plucker_embed(&cols(&[e(4, 0), e(4, 1)])).unwrap();
        assert_eq!(g.plucker().coeff(&[0, 1]), c(1.0));
        assert_eq!(g.plucker().norm(), 1.0);
    }

    #[test]
    fn embed_hand_expansion() {
        // (e1 + e3) ∧ e2 = e1∧e2 − e2∧e3
        let g = plucker_embed(&cols(&[e(4, 0) + e(4, 2), e(4, 1)])).unwrap();
        let p = g.plucker();
        for (k, s) in subsets(4, 2).iter().enumerate() {
            let z = p.coeffs()[k].norm();
            if s == &[0, 1] || s == &[1, 2] {
                assert!((z - 0.5f64.sqrt()).abs() < 1e-12);
            } else {
                assert!(z < 1e-14);
            }
        }
    }

    #[test]
    fn embed_basis_invariant() {
        let mut rng = RandomSource::new(5, 0).rng();
        let b = gaussian_matrix(&mut rng, 5, 2);
        let change = gaussian_matrix(&mut rng, 2, 2);
        let g1 = plucker_embed(&b).unwrap();
        let g2 = plucker_embed(&(&b * change)).unwrap();
        assert!(g1.approx_eq(&g2, 1e-10));
        assert!(g1.fs_distance(&g2) < 1e-10);
    }

    #[test]
    fn embed_rejects_rank_deficient() {
        let b = cols(&[e(3, 0), e(3, 0)]);
        assert!(matches!(plucker_embed(&b), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn non_decomposable_violates_relations() {
        let v = MultiVector::basis(4, &[0, 1]).add(&MultiVector::basis(4, &[2, 3]));
        assert!(!v.is_decomposable());
        assert!(GrassmannPoint::from_multivector(&v).is_err());
    }

    #[test]
    fn basis_recovers_subspace() {
        let mut rng = RandomSource::new(9, 0).rng();
        for (d, ell) in [(4, 2), (5, 3), (6, 1), (6, 5)] {
            let b = gaussian_matrix(&mut rng, d, ell);
            let g = plucker_embed(&b).unwrap();
            let again = plucker_embed(&g.basis()).unwrap();
            assert!(g.fs_distance(&again) < 1e-10);
        }
    }

    #[test]
    fn section_membership() {
        let ups = MultiVector::basis(4, &[2, 3]);
        let h = HyperplaneSection::new(ups).unwrap();
        let xi12 = plucker_embed(&cols(&[e(4, 0), e(4, 1)])).unwrap();
        let xi13 = plucker_embed(&cols(&[e(4, 0), e(4, 2)])).unwrap();
        assert!(!hyperplane_contains(&h, &xi12).unwrap());
        assert!(hyperplane_contains(&h, &xi13).unwrap());
        let xi1 = plucker_embed(&e(4, 0)).unwrap();
        assert!(matches!(
            hyperplane_contains(&h, &xi1),
            Err(Error::DegreeMismatch { .. })
        ));
    }

    #[test]
    fn section_agrees_with_rank_test() {
        let mut rng = RandomSource::new(13, 0).rng();
        for trial in 0..50 {
            let a = gaussian_matrix(&mut rng, 4, 2);
            let mut b = gaussian_matrix(&mut rng, 4, 2);
            if trial % 2 == 0 {
                // force a shared direction
                b.set_column(0, &(a.column(0) * c(2.0) - a.column(1)));
            }
            let xi = plucker_embed(&a).unwrap();
            let h = HyperplaneSection::from_basis(&b).unwrap();
            let stacked = CMatrix::from_fn(4, 4, |i, j| if j < 2 { a[(i, j)] } else { b[(i, j - 2)] });
            let meets = numerical_rank(&stacked, 1e-10) < 4;
            assert_eq!(h.contains(&xi, 1e-9).unwrap(), meets);
        }
    }

    #[test]
    fn eccentricity_examples() {
        let ecc = eccentricity(&diag(&[5.0, 4.0, 2.0, 1.0]), 2).unwrap();
        assert!((ecc.value - 2.0).abs() < 1e-12);
        assert!(ecc.unique);
        let expect = plucker_embed(&cols(&[e(4, 0), e(4, 1)])).unwrap();
        assert!(ecc.most_expanded.fs_distance(&expect) < 1e-12);

        let ecc = eccentricity(&diag(&[3.0, 1.0]), 1).unwrap();
        assert!((ecc.value - 3.0).abs() < 1e-12);

        let mut rng = RandomSource::new(1, 0).rng();
        let u = random_unitary(&mut rng, 4);
        let ecc = eccentricity(&u, 2).unwrap();
        assert!((ecc.value - 1.0).abs() < 1e-12);
        assert!(!ecc.unique);

        let sing = diag(&[1.0, 0.0]);
        assert!(matches!(eccentricity(&sing, 1), Err(Error::Singular(_))));
    }

    #[test]
    fn most_expanded_attains_ratio() {
        let mut rng = RandomSource::new(21, 0).rng();
        let l = gaussian_matrix(&mut rng, 5, 5);
        for ell in 1..5 {
            let ecc = eccentricity(&l, ell).unwrap();
            let r = expansion_ratio(&l, &ecc.most_expanded);
            assert!((r - ecc.value).abs() < 1e-9 * ecc.value);
        }
    }

    #[test]
    fn quasi_projective_examples() {
        let qm = QuasiProjectiveMap::from_linear(&identity(4), 2).unwrap();
        let mut rng = RandomSource::new(2, 0).rng();
        let xi = plucker_embed(&gaussian_matrix(&mut rng, 4, 2)).unwrap();
        assert!(quasi_projective_apply(&qm, &xi).unwrap().approx_eq(&xi, 1e-12));
        assert_eq!(kernel_hyperplane(&qm).unwrap(), KernelSection::Empty);

        let qm = QuasiProjectiveMap::from_linear(&diag(&[1.0, 0.0]), 1).unwrap();
        let e1 = plucker_embed(&e(2, 0)).unwrap();
        let e2 = plucker_embed(&e(2, 1)).unwrap();
        assert!(quasi_projective_apply(&qm, &e1).unwrap().approx_eq(&e1, 1e-12));
        assert!(matches!(
            quasi_projective_apply(&qm, &e2),
            Err(Error::InKernel { .. })
        ));
        let KernelSection::Section(h) = kernel_hyperplane(&qm).unwrap() else {
            panic!("kernel is nonempty");
        };
        assert!(h.contains(&e2, 1e-12).unwrap());
        assert!(!h.contains(&e1, 1e-12).unwrap());
        let diag_line = plucker_embed(&real_matrix(2, 1, &[1.0, 1.0])).unwrap();
        assert!(!h.contains(&diag_line, 1e-12).unwrap());
    }

    #[test]
    fn quasi_projective_limit() {
        let t: f64 = 0.5;
        let qm = QuasiProjectiveMap::from_linear(&diag(&[1.0, t.powi(60)]), 1).unwrap();
        let x = plucker_embed(&real_matrix(2, 1, &[1.0, 1.0])).unwrap();
        let img = quasi_projective_apply(&qm, &x).unwrap();
        let e1 = plucker_embed(&e(2, 0)).unwrap();
        assert!(img.fs_distance(&e1) < 1e-15);
    }

    #[test]
    fn kernel_section_contains_kernel() {
        let qm = QuasiProjectiveMap::from_linear(&diag(&[1.0, 1.0, 0.0, 0.0]), 2).unwrap();
        assert_eq!(qm.kernel_basis().len(), 5);
        let KernelSection::Section(h) = kernel_hyperplane(&qm).unwrap() else {
            panic!("kernel is nonempty");
        };
        for k in qm.kernel_basis() {
            assert!(h.contains_vector(k, 1e-10).unwrap());
        }
        let e12 = MultiVector::basis(4, &[0, 1]);
        assert!(!h.contains_vector(&e12, 1e-10).unwrap());
    }

    #[test]
    fn exact_power_matches_float() {
        let a = QMatrix::from_i64(3, 3, &[1, 2, 0, -1, 3, 4, 2, 2, 5]);
        let p = exterior_power_exact(&a, 2).unwrap();
        let f = exterior_power(&a.to_complex(), 2).unwrap();
        assert!(frobenius(&(p.to_complex() - f)) < 1e-12);
        assert_eq!(
            exterior_power_exact(&a, 3).unwrap()[(0, 0)],
            a.determinant().unwrap()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn functoriality(seed in any::<u64>(), d in 2usize..=5, ell_frac in 0.0f64..1.0) {
            let ell = 1 + ((d - 1) as f64 * ell_frac) as usize;
            let mut rng = RandomSource::new(seed, 0).rng();
            let a = gaussian_matrix(&mut rng, d, d);
            let b = gaussian_matrix(&mut rng, d, d);
            let lhs = exterior_power(&(&a * &b), ell).unwrap();
            let rhs = exterior_power(&a, ell).unwrap() * exterior_power(&b, ell).unwrap();
            prop_assert!(frobenius(&(&lhs - rhs)) <= 1e-9 * frobenius(&lhs));
        }

        #[test]
        fn commuting_square(seed in any::<u64>(), d in 2usize..=6, ell_frac in 0.0f64..1.0) {
            let ell = 1 + ((d - 1) as f64 * ell_frac) as usize;
            let mut rng = RandomSource::new(seed, 1).rng();
            let b = gaussian_matrix(&mut rng, d, d);
            let w = gaussian_matrix(&mut rng, d, ell);
            let direct = plucker_embed(&(&b * &w)).unwrap();
            let qm = QuasiProjectiveMap::from_linear(&b, ell).unwrap();
            let via = quasi_projective_apply(&qm, &plucker_embed(&w).unwrap()).unwrap();
            prop_assert!(direct.fs_distance(&via) < 1e-9);
        }

        #[test]
        fn unitary_invariance(seed in any::<u64>(), d in 2usize..=6, ell_frac in 0.0f64..1.0) {
            let ell = 1 + ((d - 2) as f64 * ell_frac) as usize;
            let mut rng = RandomSource::new(seed, 2).rng();
            let l = gaussian_matrix(&mut rng, d, d);
            let u = random_unitary(&mut rng, d);
            let v = random_unitary(&mut rng, d);
            let e1 = eccentricity(&l, ell).unwrap().value;
            let e2 = eccentricity(&(&u * &l * &v), ell).unwrap().value;
            prop_assert!((e1 - e2).abs() <= 1e-9 * e1);
        }

        #[test]
        fn singular_values_of_power_are_products(seed in any::<u64>(), d in 2usize..=5) {
            let mut rng = RandomSource::new(seed, 3).rng();
            let l = gaussian_matrix(&mut rng, d, d);
            let s = singular_decomposition(&l).unwrap().singular_values;
            for ell in 1..=d {
                let p = singular_decomposition(&exterior_power(&l, ell).unwrap()).unwrap();
                let mut prods: Vec<f64> = subsets(d, ell)
                    .iter()
                    .map(|i| i.iter().map(|&k| s[k]).product())
                    .collect();
                prods.sort_by(|a, b| b.total_cmp(a));
                for (x, y) in p.singular_values.iter().zip(&prods) {
                    prop_assert!((x - y).abs() <= 1e-9 * prods[0]);
                }
            }
        }
    }
}
