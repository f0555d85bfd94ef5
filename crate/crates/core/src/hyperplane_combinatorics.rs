//! k-cubes in dense integer sets, invariant subspaces forced by iterated
//! hyperplane intersections, generalized Vandermonde determinants and the
//! disjointness of translated hyperplane sections.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{exact_eigen, to_f64, QMatrix, Rational};
use crate::exterior::{
    binomial, exterior_power, exterior_power_exact, merge_sign, orthogonal_complement, subset_rank, subsets,
    GrassmannPoint, HyperplaneSection, MultiVector, PLUCKER_TOL,
};
use crate::numeric::{c, eigen_decomposition, gaussian_c64, numerical_rank, orthonormalize, svd, CMatrix, C64};

/// {c + Σ aᵢcᵢ : aᵢ ∈ {0, 1}}.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KCube {
    pub base: usize,
    pub sides: Vec<usize>,
}

impl KCube {
    pub fn new(base: usize, sides: Vec<usize>) -> Result<Self> {
        if sides.contains(&0) {
            return Err(Error::Precondition("cube sides must be positive".into()));
        }
        Ok(Self { base, sides })
    }

    pub fn k(&self) -> usize {
        self.sides.len()
    }

    /// The 2^k sums, with repetitions, in binary order of (a₁, …, a_k).
    pub fn sums(&self) -> Vec<usize> {
        (0..1usize << self.k())
            .map(|mask| {
                self.base
                    + self
                        .sides
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask >> i & 1 == 1)
                        .map(|(_, s)| s)
                        .sum::<usize>()
            })
            .collect()
    }

    /// Distinct members, increasing.
    pub fn members(&self) -> Vec<usize> {
        self.sums().into_iter().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Whether all 2^k sums are distinct.
    pub fn is_proper(&self) -> bool {
        self.members().len() == 1 << self.k()
    }

    pub fn contained_in(&self, set: &BTreeSet<usize>) -> bool {
        self.sums().iter().all(|x| set.contains(x))
    }

    /// The two (k−1)-cubes based at c and c + c_k.
    pub fn halves(&self) -> (Self, Self) {
        let k = self.k();
        let sides = self.sides[..k - 1].to_vec();
        (
            Self {
                base: self.base,
                sides: sides.clone(),
            },
            Self {
                base: self.base + self.sides[k - 1],
                sides,
            },
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CubeFamily {
    pub sides: Vec<usize>,
    /// Every base c gives a cube contained in J.
    pub bases: Vec<usize>,
    /// Density guaranteed by the construction: δ₀ = ε, δ_k = δ_{k−1}²/16.
    pub delta: f64,
    /// |bases| / N.
    pub density: f64,
    /// False when the result came from exhaustive search.
    pub constructive: bool,
}

impl CubeFamily {
    pub fn cubes(&self) -> impl Iterator<Item = KCube> + '_ {
        self.bases.iter().map(|&b| KCube {
            base: b,
            sides: self.sides.clone(),
        })
    }
}

/// One level of the gap-frequency argument: the most frequent gap between
/// consecutive elements among gaps at most 4/ε (all gaps if none is that
/// small), ties to the smaller gap. Returns the gap and the left endpoints.
fn gap_level(set: &[usize], eps: f64) -> Option<(usize, Vec<usize>)> {
    if set.len() < 2 {
        return None;
    }
    let gaps: Vec<usize> = set.windows(2).map(|w| w[1] - w[0]).collect();
    let bound = (4.0 / eps).floor() as usize;
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &g in gaps.iter().filter(|&&g| g <= bound) {
        *hist.entry(g).or_default() += 1;
    }
    if hist.is_empty() {
        for &g in &gaps {
            *hist.entry(g).or_default() += 1;
        }
    }
    let (&gap, _) = hist.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))?;
    let bases = set
        .windows(2)
        .filter(|w| w[1] - w[0] == gap)
        .map(|w| w[0])
        .collect();
    Some((gap, bases))
}

/// Sides c₁..c_k and bases such that J contains the cube at each base,
/// built level by level; exhaustive search when the construction runs dry.
/// `None` only when no k-cube lies in J.
pub fn find_k_cube(j: &BTreeSet<usize>, n: usize, eps: f64, k: usize) -> Result<Option<CubeFamily>> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    if j.iter().any(|&x| x >= n) {
        return Err(Error::Precondition(format!("J must lie in [0, {n})")));
    }
    if (j.len() as f64) < eps * n as f64 * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("|J| = {} < ε·N = {}", j.len(), eps * n as f64)));
    }
    let mut level: Vec<usize> = j.iter().copied().collect();
    let mut sides = Vec::with_capacity(k);
    let mut delta = eps;
    let mut dens = eps;
    for _ in 0..k {
        match gap_level(&level, dens) {
            Some((gap, bases)) => {
                sides.push(gap);
                level = bases;
                delta = delta * delta / 16.0;
                dens = (level.len() as f64 / n as f64).max(f64::MIN_POSITIVE);
            }
            None => {
                level.clear();
                break;
            }
        }
    }
    if sides.len() == k && !level.is_empty() {
        return Ok(Some(CubeFamily {
            density: level.len() as f64 / n as f64,
            sides,
            bases: level,
            delta,
            constructive: true,
        }));
    }
    Ok(exhaustive_cube(j, n, k).map(|(sides, bases)| CubeFamily {
        density: bases.len() as f64 / n as f64,
        sides,
        bases,
        delta,
        constructive: false,
    }))
}

/// Side tuple with the most bases; sides range over 1..N.
fn exhaustive_cube(j: &BTreeSet<usize>, n: usize, k: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut best: Option<(Vec<usize>, Vec<usize>)> = None;
    let mut sides = vec![1usize; k];
    loop {
        let total: usize = sides.iter().sum();
        if total < n {
            let bases: Vec<usize> = j
                .iter()
                .copied()
                .filter(|&b| KCube { base: b, sides: sides.clone() }.contained_in(j))
                .collect();
            if !bases.is_empty() && best.as_ref().is_none_or(|b| bases.len() > b.1.len()) {
                best = Some((sides.clone(), bases));
            }
        }
        let mut i = 0;
        loop {
            if i == k {
                return best;
            }
            sides[i] += 1;
            if sides[i] < n {
                break;
            }
            sides[i] = 1;
            i += 1;
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CubeInvariance {
    pub subcube: KCube,
    pub period: usize,
    /// Codimension of H(I′).
    pub codim: usize,
    /// B^l(H(I′)) = H(I′) checked directly.
    pub verified: bool,
}

/// Codimension oracle and invariance test for H(I) = ∩_{i∈I} Bⁱ(H).
trait Intersections {
    fn codim(&mut self, members: &[usize]) -> usize;
    fn invariant(&mut self, members: &[usize], l: usize) -> bool;
}

fn descend(ops: &mut dyn Intersections, cube: &KCube) -> CubeInvariance {
    if cube.k() == 1 {
        let sub = KCube {
            base: cube.base,
            sides: vec![],
        };
        return finish(ops, sub, cube.sides[0]);
    }
    let (i1, i2) = cube.halves();
    let bound = cube.k() - 1;
    if ops.codim(&i1.members()) <= bound {
        return descend(ops, &i1);
    }
    if ops.codim(&i2.members()) <= bound {
        return descend(ops, &i2);
    }
    let l = cube.sides[cube.k() - 1];
    finish(ops, i1, l)
}

fn finish(ops: &mut dyn Intersections, sub: KCube, l: usize) -> CubeInvariance {
    let m = sub.members();
    CubeInvariance {
        codim: ops.codim(&m),
        verified: ops.invariant(&m, l),
        subcube: sub,
        period: l,
    }
}

fn run_cube(ops: &mut dyn Intersections, cube: &KCube, cap: usize) -> Result<CubeInvariance> {
    if cube.k() == 0 || cube.k() > cap {
        return Err(Error::Precondition(format!("cube dimension {} outside 1..={cap}", cube.k())));
    }
    let codim = ops.codim(&cube.members());
    if codim > cube.k() {
        return Err(Error::Precondition(format!(
            "H(I) has codimension {codim} > k = {}",
            cube.k()
        )));
    }
    Ok(descend(ops, cube))
}

struct ExactIntersections {
    normal: QMatrix,
    inverse: QMatrix,
    powers: Vec<QMatrix>,
}

impl ExactIntersections {
    fn row(&mut self, i: usize) -> QMatrix {
        while self.powers.len() <= i {
            let next = &self.powers[self.powers.len() - 1] * &self.inverse;
            self.powers.push(next);
        }
        &self.normal * &self.powers[i]
    }

    fn stack(&mut self, members: &[usize], shift: usize) -> Vec<QMatrix> {
        members.iter().map(|&i| self.row(i + shift)).collect()
    }
}

fn rank_of_rows(rows: &[QMatrix]) -> usize {
    let n = rows[0].ncols();
    QMatrix::from_fn(rows.len(), n, |i, j| rows[i][(0, j)].clone()).rank()
}

impl Intersections for ExactIntersections {
    fn codim(&mut self, members: &[usize]) -> usize {
        rank_of_rows(&self.stack(members, 0))
    }

    fn invariant(&mut self, members: &[usize], l: usize) -> bool {
        let mut rows = self.stack(members, 0);
        let r = rank_of_rows(&rows);
        rows.extend(self.stack(members, l));
        rank_of_rows(&rows) == r
    }
}

/// Follows the halving induction on a k-cube to a subcube I′ and l ≥ 1 with
/// B^l(H(I′)) = H(I′). H is the span of the columns of `h_basis`.
pub fn invariant_subspace_from_cube(
    h_basis: &QMatrix,
    b: &QMatrix,
    cube: &KCube,
    codim_cap: usize,
) -> Result<CubeInvariance> {
    let n = b.nrows();
    if h_basis.nrows() != n || h_basis.rank() != n - 1 {
        return Err(Error::Precondition("H must be a codimension-one subspace".into()));
    }
    let null = h_basis.transpose().nullspace();
    let normal = QMatrix::from_fn(1, n, |_, j| null[0][j].clone());
    let inverse = b.inverse()?;
    let mut ops = ExactIntersections {
        normal,
        inverse,
        powers: vec![QMatrix::identity(n)],
    };
    run_cube(&mut ops, cube, codim_cap)
}

struct FloatIntersections {
    normal: CMatrix,
    inverse: CMatrix,
    tol: f64,
}

impl FloatIntersections {
    fn stack(&self, members: &[usize], shift: usize) -> Vec<CMatrix> {
        members
            .iter()
            .map(|&i| {
                let mut r = self.normal.clone();
                for _ in 0..i + shift {
                    r = &r * &self.inverse;
                    let s = r.norm();
                    r /= c(s);
                }
                r
            })
            .collect()
    }

    fn rank(&self, rows: &[CMatrix]) -> usize {
        let n = rows[0].ncols();
        let m = CMatrix::from_fn(rows.len(), n, |i, j| rows[i][(0, j)]);
        numerical_rank(&m, self.tol)
    }
}

impl Intersections for FloatIntersections {
    fn codim(&mut self, members: &[usize]) -> usize {
        self.rank(&self.stack(members, 0))
    }

    fn invariant(&mut self, members: &[usize], l: usize) -> bool {
        let mut rows = self.stack(members, 0);
        let r = self.rank(&rows);
        rows.extend(self.stack(members, l));
        self.rank(&rows) == r
    }
}

/// Float version with relative rank tolerance `tol`.
pub fn invariant_subspace_from_cube_float(
    h_basis: &CMatrix,
    b: &CMatrix,
    cube: &KCube,
    codim_cap: usize,
    tol: f64,
) -> Result<CubeInvariance> {
    let n = b.nrows();
    if h_basis.nrows() != n || h_basis.ncols() != n - 1 {
        return Err(Error::Precondition("H must be a codimension-one subspace".into()));
    }
    let q = orthonormalize(h_basis, tol)?;
    let normal = orthogonal_complement(&q).adjoint();
    let inverse = crate::numeric::inverse(b)?;
    let mut ops = FloatIntersections { normal, inverse, tol };
    run_cube(&mut ops, cube, codim_cap)
}

/// Strictly increasing non-negative exponents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExponentTuple(Vec<u32>);

impl ExponentTuple {
    pub fn new(m: Vec<u32>) -> Result<Self> {
        if m.is_empty() || m.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Precondition(format!("exponents {m:?} must increase strictly")));
        }
        Ok(Self(m))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn with(&self, extra: u32) -> Result<Self> {
        let mut m = self.0.clone();
        m.push(extra);
        m.sort_unstable();
        Self::new(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VandermondeResult<T> {
    /// det (x_j^{m_u})_{u,j}.
    pub det: T,
    /// ∏_{i<j} (x_j − x_i).
    pub product_part: T,
    /// det / product_part; `None` when some x repeats.
    pub schur_part: Option<T>,
}

fn rational_pow(x: &Rational, m: u32) -> Rational {
    num_traits::pow(x.clone(), m as usize)
}

pub fn vandermonde_exact(m: &ExponentTuple, x: &[Rational]) -> Result<VandermondeResult<Rational>> {
    let n = m.len();
    if x.len() != n {
        return Err(Error::DimensionMismatch(format!("{} exponents, {} points", n, x.len())));
    }
    let mat = QMatrix::from_fn(n, n, |u, j| rational_pow(&x[j], m.0[u]));
    let det = mat.determinant()?;
    let mut product_part = Rational::one();
    for j in 0..n {
        for i in 0..j {
            product_part *= &x[j] - &x[i];
        }
    }
    let schur_part = (!product_part.is_zero()).then(|| &det / &product_part);
    Ok(VandermondeResult {
        det,
        product_part,
        schur_part,
    })
}

pub fn vandermonde(m: &ExponentTuple, x: &[f64]) -> Result<VandermondeResult<f64>> {
    let n = m.len();
    if x.len() != n {
        return Err(Error::DimensionMismatch(format!("{} exponents, {} points", n, x.len())));
    }
    let mat = nalgebra::DMatrix::from_fn(n, n, |u, j| x[j].powi(m.0[u] as i32));
    let det = mat.determinant();
    let mut product_part = 1.0;
    for j in 0..n {
        for i in 0..j {
            product_part *= x[j] - x[i];
        }
    }
    let schur_part = (product_part != 0.0).then(|| det / product_part);
    Ok(VandermondeResult {
        det,
        product_part,
        schur_part,
    })
}

/// σ_I with θ_I ∧ θ_{I^c} = σ_I θ_{1..d}.
pub fn complement_sign(members: &[usize], d: usize) -> f64 {
    let comp: Vec<usize> = (0..d).filter(|x| !members.contains(x)).collect();
    merge_sign(members, &comp)
}

fn complement(members: &[usize], d: usize) -> Vec<usize> {
    (0..d).filter(|x| !members.contains(x)).collect()
}

#[derive(Clone, Debug)]
pub struct DisjointnessReport {
    /// ∩_u B^{−m_u}(V) is empty.
    pub empty: bool,
    /// A point of the intersection when one was found.
    pub witness: Option<GrassmannPoint>,
    /// Dimension of the solution space of the linear system in Λ^ℓ.
    pub kernel_dim: usize,
    /// The decision did not rely on random sampling.
    pub certified: bool,
    /// Smallest singular value of the row-scaled system over its largest
    /// (float mode).
    pub margin: f64,
    pub exact: bool,
    /// All eigenvalues real and positive, so the Vandermonde sign argument
    /// applies without passing to B².
    pub positive_spectrum: bool,
}

/// Draws used when decomposability of a kernel vector cannot be settled by
/// rank conditions.
pub const DECOMPOSABLE_SEARCH_DRAWS: usize = 10_000;
const KERNEL_RANK_TOL: f64 = 1e-10;

/// Finds a decomposable vector in the span of `kernel` (eigen coordinates).
/// Returns (witness, certified).
fn decomposable_in_span(kernel: &[Vec<C64>], d: usize, ell: usize) -> (Option<Vec<C64>>, bool) {
    if kernel.is_empty() {
        return (None, true);
    }
    if ell == 1 || ell + 1 == d {
        return (Some(kernel[0].clone()), true);
    }
    let mv = |v: &[C64]| MultiVector::from_coeffs(d, ell, v.to_vec()).expect("sizes match");
    if kernel.len() == 1 {
        let w = mv(&kernel[0]);
        let unit = w.scaled(c(1.0 / w.norm()));
        return if unit.plucker_residual() <= PLUCKER_TOL {
            (Some(kernel[0].clone()), true)
        } else {
            (None, true)
        };
    }
    if ell == 2 && d == 4 {
        // the single quadric ω₁₂ω₃₄ − ω₁₃ω₂₄ + ω₁₄ω₂₃ has a zero on any plane
        let q = |a: &[C64], b: &[C64]| {
            let idx = |i: usize, j: usize| subset_rank(&[i, j], 4);
            let f = |x: &[C64], y: &[C64]| {
                x[idx(0, 1)] * y[idx(2, 3)] - x[idx(0, 2)] * y[idx(1, 3)] + x[idx(0, 3)] * y[idx(1, 2)]
            };
            (f(a, b) + f(b, a)) * c(0.5)
        };
        let (y1, y2) = (&kernel[0], &kernel[1]);
        let (q11, q12, q22) = (q(y1, y1), q(y1, y2), q(y2, y2));
        let (a, b) = if q11.norm() < 1e-14 {
            (c(1.0), c(0.0))
        } else {
            let disc = (q12 * q12 - q11 * q22).sqrt();
            ((-q12 + disc) / q11, c(1.0))
        };
        let v: Vec<C64> = y1.iter().zip(y2).map(|(x, y)| a * x + b * y).collect();
        return (Some(v), true);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let n = kernel[0].len();
    for _ in 0..DECOMPOSABLE_SEARCH_DRAWS {
        let coef: Vec<C64> = kernel.iter().map(|_| gaussian_c64(&mut rng)).collect();
        let v: Vec<C64> = (0..n).map(|i| kernel.iter().zip(&coef).map(|(k, a)| k[i] * a).sum()).collect();
        let w = mv(&v);
        if w.scaled(c(1.0 / w.norm())).plucker_residual() <= PLUCKER_TOL {
            return (Some(v), false);
        }
    }
    (None, false)
}

use rand::SeedableRng;

fn witness_point(eig_coords: &[C64], p: &CMatrix, d: usize, ell: usize) -> Result<GrassmannPoint> {
    let lp = exterior_power(p, ell)?;
    let v = &lp * CMatrix::from_column_slice(eig_coords.len(), 1, eig_coords);
    GrassmannPoint::from_multivector(&MultiVector::from_coeffs(d, ell, v.iter().copied().collect())?)
}

/// Decides whether ∩_u B^{−m_u}(V) is empty for the section V.
pub fn disjointness_check(
    b: &CMatrix,
    section: &HyperplaneSection,
    ell: usize,
    exponents: &ExponentTuple,
    rel_gap_tol: f64,
    zero_tol: f64,
) -> Result<DisjointnessReport> {
    let d = b.nrows();
    let ups = section.defining();
    if ell == 0 || ell >= d || ups.d() != d || ups.ell() + ell != d {
        return Err(Error::DegreeMismatch {
            ell,
            codegree: ups.ell(),
            d,
        });
    }
    let eig = eigen_decomposition(b)?;
    let moduli: Vec<f64> = eig.eigenvalues.iter().map(|z| z.norm()).collect();
    for w in moduli.windows(2) {
        if w[0] - w[1] <= rel_gap_tol * w[0] {
            return Err(Error::NotPinching);
        }
    }
    let p = &eig.eigenvectors;
    let comp_power = exterior_power(p, d - ell)?;
    let ups_col = ups.as_column();
    let ups_eig = comp_power
        .lu()
        .solve(&ups_col)
        .ok_or_else(|| Error::Singular("eigenbasis".into()))?;
    let subs = subsets(d, ell);
    let scale = ups_eig.norm();
    let mut upsilon = Vec::with_capacity(subs.len());
    for s in &subs {
        let v = ups_eig[subset_rank(&complement(s, d), d)];
        if v.norm() <= zero_tol * scale {
            return Err(Error::ContainsEigenspace {
                subset: s.iter().map(|x| x + 1).collect(),
            });
        }
        upsilon.push(v);
    }
    let b_sub: Vec<C64> = subs
        .iter()
        .map(|s| complement(s, d).iter().map(|&j| eig.eigenvalues[j]).product())
        .collect();
    let n = subs.len();
    let m = exponents.as_slice();
    let mut x = CMatrix::from_fn(m.len(), n, |u, i| b_sub[i].powi(-(m[u] as i32)));
    for u in 0..m.len() {
        let s = x.row(u).iter().map(|z| z.norm()).fold(0.0, f64::max);
        x.row_mut(u).scale_mut(1.0 / s);
    }
    let f = svd(&x)?;
    let sv = &f.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > KERNEL_RANK_TOL * smax).count();
    let margin = if m.len() >= n {
        sv.iter().copied().fold(f64::INFINITY, f64::min) / smax
    } else {
        0.0
    };
    // right singular vectors beyond the rank span the kernel
    let kernel_cols: Vec<Vec<C64>> = (rank..n).map(|j| f.v.column(j).iter().copied().collect()).collect();
    let sigma: Vec<f64> = subs.iter().map(|s| complement_sign(s, d)).collect();
    let kernel: Vec<Vec<C64>> = kernel_cols
        .iter()
        .map(|y| (0..n).map(|i| y[i] / (upsilon[i] * c(sigma[i]))).collect())
        .collect();
    let (w, certified) = decomposable_in_span(&kernel, d, ell);
    let witness = w.map(|v| witness_point(&v, p, d, ell)).transpose()?;
    Ok(DisjointnessReport {
        empty: witness.is_none(),
        witness,
        kernel_dim: kernel.len(),
        certified,
        margin,
        exact: false,
        positive_spectrum: eig.eigenvalues.iter().all(|z| z.im.abs() <= 1e-12 * z.norm() && z.re > 0.0),
    })
}

/// Exact version for rational diagonalizable B with rational spectrum; the
/// section is given by the coefficients of its defining (d−ℓ)-vector.
pub fn disjointness_check_exact(
    b: &QMatrix,
    upsilon: &[Rational],
    ell: usize,
    exponents: &ExponentTuple,
) -> Result<DisjointnessReport> {
    let d = b.nrows();
    if ell == 0 || ell >= d || upsilon.len() != binomial(d, d - ell) {
        return Err(Error::DegreeMismatch {
            ell,
            codegree: d - ell,
            d,
        });
    }
    let eig = exact_eigen(b).ok_or(Error::NotExact)?;
    let ev = &eig.eigenvalues;
    if ev.windows(2).any(|w| w[0].abs() == w[1].abs()) {
        return Err(Error::NotPinching);
    }
    let p = &eig.eigenvectors;
    let comp_power = exterior_power_exact(p, d - ell)?;
    let col = QMatrix::from_fn(upsilon.len(), 1, |i, _| upsilon[i].clone());
    let ups_eig = &comp_power.inverse()? * &col;
    let subs = subsets(d, ell);
    let n = subs.len();
    let mut ups = Vec::with_capacity(n);
    for s in &subs {
        let v = ups_eig[(subset_rank(&complement(s, d), d), 0)].clone();
        if v.is_zero() {
            return Err(Error::ContainsEigenspace {
                subset: s.iter().map(|x| x + 1).collect(),
            });
        }
        ups.push(v);
    }
    let b_sub: Vec<Rational> = subs
        .iter()
        .map(|s| complement(s, d).iter().map(|&j| ev[j].clone()).product())
        .collect();
    let m = exponents.as_slice();
    let x = QMatrix::from_fn(m.len(), n, |u, i| rational_pow(&b_sub[i], m[u]).recip());
    let null = x.nullspace();
    let sigma: Vec<Rational> = subs
        .iter()
        .map(|s| crate::exact::q(complement_sign(s, d) as i64))
        .collect();
    let kernel_exact: Vec<Vec<Rational>> = null
        .iter()
        .map(|y| (0..n).map(|i| &y[i] / (&ups[i] * &sigma[i])).collect())
        .collect();
    let to_c = |v: &[Rational]| v.iter().map(|r| c(to_f64(r))).collect::<Vec<C64>>();
    let (w, certified) = if kernel_exact.len() == 1 && ell == 2 && d > 3 {
        // decomposable iff every quadratic Plücker relation vanishes
        let v = &kernel_exact[0];
        let idx = |i: usize, j: usize| subset_rank(&[i, j], d);
        let mut zero = true;
        for quad in subsets(d, 4) {
            let [i, j, k, l] = [quad[0], quad[1], quad[2], quad[3]];
            let r = &v[idx(i, j)] * &v[idx(k, l)] - &v[idx(i, k)] * &v[idx(j, l)] + &v[idx(i, l)] * &v[idx(j, k)];
            zero &= r.is_zero();
        }
        (zero.then(|| to_c(v)), true)
    } else {
        let kf: Vec<Vec<C64>> = kernel_exact.iter().map(|v| to_c(v)).collect();
        decomposable_in_span(&kf, d, ell)
    };
    let witness = w.map(|v| witness_point(&v, &p.to_complex(), d, ell)).transpose()?;
    Ok(DisjointnessReport {
        empty: witness.is_none(),
        witness,
        kernel_dim: kernel_exact.len(),
        certified,
        margin: f64::NAN,
        exact: true,
        positive_spectrum: ev.iter().all(|x| x.is_positive()),
    })
}

/// Data of the grouped equations Σ_{b_J = b_I} σ_J ω(J) υ(J) = 0.
#[derive(Clone, Debug)]
pub struct Kernel2Instance {
    pub d: usize,
    pub ell: usize,
    /// b_I per ℓ-subset, lexicographic.
    pub b: Vec<f64>,
    pub upsilon: Vec<C64>,
    pub sigma: Vec<f64>,
}

/// b_I = ∏_{j ∉ I} b_j for every ℓ-subset I.
pub fn complement_products(eigenvalues: &[f64], ell: usize) -> Vec<f64> {
    let d = eigenvalues.len();
    subsets(d, ell)
        .iter()
        .map(|s| complement(s, d).iter().map(|&j| eigenvalues[j]).product())
        .collect()
}

impl Kernel2Instance {
    pub fn new(d: usize, ell: usize, b: Vec<f64>, upsilon: Vec<C64>, sigma: Vec<f64>) -> Result<Self> {
        let n = binomial(d, ell);
        if b.len() != n || upsilon.len() != n || sigma.len() != n {
            return Err(Error::DimensionMismatch(format!("expected {n} entries per subset")));
        }
        let subs = subsets(d, ell);
        if let Some(i) = upsilon.iter().position(|u| u.norm() == 0.0) {
            return Err(Error::ContainsEigenspace {
                subset: subs[i].iter().map(|x| x + 1).collect(),
            });
        }
        Ok(Self {
            d,
            ell,
            b,
            upsilon,
            sigma,
        })
    }

    /// From eigenvalues b₁ > … > b_d, with the standard signs σ_I.
    pub fn from_eigenvalues(eigenvalues: &[f64], ell: usize, upsilon: Vec<C64>) -> Result<Self> {
        let d = eigenvalues.len();
        let sigma = subsets(d, ell).iter().map(|s| complement_sign(s, d)).collect();
        Self::new(d, ell, complement_products(eigenvalues, ell), upsilon, sigma)
    }

    /// Subset indices grouped by equal b_I (relative 1e-12), largest b first.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.b.len()).collect();
        order.sort_by(|&i, &j| self.b[j].total_cmp(&self.b[i]).then(i.cmp(&j)));
        let mut out: Vec<Vec<usize>> = Vec::new();
        for i in order {
            match out.last_mut() {
                Some(g) if (self.b[g[0]] - self.b[i]).abs() <= 1e-12 * self.b[g[0]].abs() => g.push(i),
                _ => out.push(vec![i]),
            }
        }
        out
    }

    /// max over groups of |Σ σ_J υ(J) ω(J)| / (|ω| max|υ|).
    pub fn grouped_residual(&self, omega: &MultiVector) -> f64 {
        let scale = omega.norm() * self.upsilon.iter().map(|u| u.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        self.groups()
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&j| c(self.sigma[j]) * self.upsilon[j] * omega.coeffs()[j])
                    .sum::<C64>()
                    .norm()
            })
            .fold(0.0, f64::max)
            / scale
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Kernel2Report {
    pub satisfies: bool,
    pub omega_zero: bool,
    /// Satisfying the grouped equations forces ω = 0.
    pub holds: bool,
}

pub fn kernel2_check(inst: &Kernel2Instance, omega: &MultiVector, tol: f64) -> Result<Kernel2Report> {
    if omega.d() != inst.d || omega.ell() != inst.ell {
        return Err(Error::DimensionMismatch("ω has the wrong degree".into()));
    }
    if omega.norm() > 0.0 && omega.scaled(c(1.0 / omega.norm())).plucker_residual() > PLUCKER_TOL {
        return Err(Error::NotDecomposable {
            residual: omega.plucker_residual(),
        });
    }
    let omega_zero = omega.norm() <= tol;
    let satisfies = omega_zero || inst.grouped_residual(omega) <= tol;
    Ok(Kernel2Report {
        satisfies,
        omega_zero,
        holds: !satisfies || omega_zero,
    })
}

#[derive(Clone, Debug)]
pub struct Kernel2Refutation {
    pub draws: usize,
    pub min_residual: f64,
    /// A random decomposable ω satisfying the grouped equations within tol.
    pub counterexample: Option<MultiVector>,
}

/// Random decomposable ω (wedges of Gaussian frames in eigen coordinates)
/// tested against the grouped equations.
pub fn kernel2_refutation<R: Rng + ?Sized>(
    inst: &Kernel2Instance,
    draws: usize,
    tol: f64,
    rng: &mut R,
) -> Kernel2Refutation {
    let mut min_residual = f64::INFINITY;
    let mut counterexample = None;
    for _ in 0..draws {
        let frame = crate::numeric::gaussian_matrix(rng, inst.d, inst.ell);
        let w = MultiVector::wedge_columns(&frame);
        let r = inst.grouped_residual(&w);
        if r < min_residual {
            min_residual = r;
        }
        if r <= tol && counterexample.is_none() {
            counterexample = Some(w);
        }
    }
    Kernel2Refutation {
        draws,
        min_residual,
        counterexample,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Kernel2Certificate {
    /// Dimension of the solution space of the grouped equations in Λ^ℓ.
    pub kernel_dim: usize,
    /// `Some(true)` when the solution space meets the decomposable vectors
    /// only at 0; `None` when rank conditions cannot decide.
    pub misses_plucker: Option<bool>,
}

/// Exact: solves the grouped equations and intersects the solutions with
/// the Plücker variety where rank conditions decide it.
pub fn kernel2_exact_certificate(eigenvalues: &[Rational], upsilon: &[Rational], ell: usize) -> Result<Kernel2Certificate> {
    let d = eigenvalues.len();
    let subs = subsets(d, ell);
    let n = subs.len();
    if upsilon.len() != n {
        return Err(Error::DimensionMismatch(format!("expected {n} coefficients")));
    }
    if let Some(i) = upsilon.iter().position(|u| u.is_zero()) {
        return Err(Error::ContainsEigenspace {
            subset: subs[i].iter().map(|x| x + 1).collect(),
        });
    }
    let b: Vec<Rational> = subs
        .iter()
        .map(|s| complement(s, d).iter().map(|&j| eigenvalues[j].clone()).product())
        .collect();
    let mut groups: BTreeMap<Rational, Vec<usize>> = BTreeMap::new();
    for (i, bi) in b.iter().enumerate() {
        groups.entry(bi.clone()).or_default().push(i);
    }
    let rows: Vec<&Vec<usize>> = groups.values().collect();
    let a = QMatrix::from_fn(rows.len(), n, |g, j| {
        if rows[g].contains(&j) {
            crate::exact::q(complement_sign(&subs[j], d) as i64) * &upsilon[j]
        } else {
            Rational::zero()
        }
    });
    let null = a.nullspace();
    let misses_plucker = if null.is_empty() {
        Some(true)
    } else if ell == 1 || ell + 1 == d {
        Some(false)
    } else if ell == 2 && null.len() == 1 {
        let v = &null[0];
        let idx = |i: usize, j: usize| subset_rank(&[i, j], d);
        let zero = subsets(d, 4).iter().all(|q| {
            let [i, j, k, l] = [q[0], q[1], q[2], q[3]];
            (&v[idx(i, j)] * &v[idx(k, l)] - &v[idx(i, k)] * &v[idx(j, l)] + &v[idx(i, l)] * &v[idx(j, k)]).is_zero()
        });
        Some(!zero)
    } else if ell == 2 && d == 4 {
        Some(false)
    } else {
        None
    };
    Ok(Kernel2Certificate {
        kernel_dim: null.len(),
        misses_plucker,
    })
}

/// Outcome of walking the grouped equations in decreasing b for an exact ω.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum LexicographicWalk {
    /// Every coefficient vanishes.
    Zero,
    /// The first group (0-based subset indices) with a single nonzero ω(J):
    /// its grouped equation fails, so ω is not a solution.
    NotASolution { group: Vec<usize> },
    /// Two nonzero coefficients share a group after all earlier groups
    /// vanished, which a decomposable ω cannot do.
    NotDecomposable { group: Vec<usize> },
}

/// Induction over groups of equal b_I, largest first: once earlier groups
/// vanish, at most one coefficient in the next group can be nonzero.
pub fn lexicographic_certificate(eigenvalues: &[Rational], omega: &[Rational], ell: usize) -> Result<LexicographicWalk> {
    let d = eigenvalues.len();
    let subs = subsets(d, ell);
    if omega.len() != subs.len() {
        return Err(Error::DimensionMismatch(format!("expected {} coefficients", subs.len())));
    }
    let mut groups: BTreeMap<Rational, Vec<usize>> = BTreeMap::new();
    for (i, s) in subs.iter().enumerate() {
        let bi: Rational = complement(s, d).iter().map(|&j| eigenvalues[j].clone()).product();
        groups.entry(bi).or_default().push(i);
    }
    for g in groups.values().rev() {
        let nonzero: Vec<usize> = g.iter().copied().filter(|&j| !omega[j].is_zero()).collect();
        match nonzero.len() {
            0 => continue,
            1 => return Ok(LexicographicWalk::NotASolution { group: g.clone() }),
            _ => return Ok(LexicographicWalk::NotDecomposable { group: g.clone() }),
        }
    }
    Ok(LexicographicWalk::Zero)
}
