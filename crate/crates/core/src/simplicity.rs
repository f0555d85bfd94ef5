//! Pinching and twisting at a periodic point and one of its homoclinic
//! points, transition maps, the monoid search and the adjoint cocycle.

use std::cmp::Ordering;

use num_traits::{Signed, Zero};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cocycle::{CocycleSpec, SymbolicPoint};
use crate::error::{Error, Result};
use crate::exact::{exact_eigen, to_f64, QMatrix, Rational};
use crate::exterior::{eccentricity, subsets, IndexSubset};
use crate::holonomy::{stable_holonomy, unstable_holonomy, HolonomyMap};
use crate::numeric::{
    eigen_decomposition, gaussian_matrix, inverse, orthonormalize, EigenData, RandomSource, CMatrix,
    DEFAULT_TOL,
};
use crate::shift_space::Symbol;

pub const DEFAULT_REL_GAP_TOL: f64 = 1e-6;
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;
/// Largest accepted eigensolver residual.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug)]
pub struct HolonomyOptions {
    pub tol: f64,
    pub cap: usize,
}

impl Default for HolonomyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            cap: 10_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PeriodicData {
    pub point: SymbolicPoint,
    pub word: Vec<Symbol>,
    pub period: usize,
    /// Â^q(p̂).
    pub return_matrix: CMatrix,
    pub exact_return: Option<QMatrix>,
    pub eigen: EigenData,
    /// Rational eigenbasis when the return matrix has rational spectrum.
    pub exact_eigenbasis: Option<(Vec<Rational>, QMatrix)>,
}

impl PeriodicData {
    pub fn new(spec: &CocycleSpec, word: &[Symbol]) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::InvalidSpec("periodic word is empty".into()));
        }
        let point = SymbolicPoint::periodic(word)?;
        spec.validate_point(&point)?;
        let q = word.len();
        let return_matrix = spec.product_along(&point, q);
        let exact_return = if spec.is_locally_constant() {
            spec.word_product_exact(word)
        } else {
            None
        };
        let eigen = eigen_decomposition(&return_matrix)?;
        if eigen.max_residual > EIGEN_RESIDUAL_TOL {
            return Err(Error::EigenResidual {
                residual: eigen.max_residual,
            });
        }
        let exact_eigenbasis = exact_return
            .as_ref()
            .and_then(exact_eigen)
            .map(|e| (e.eigenvalues, e.eigenvectors));
        Ok(Self {
            point,
            word: word.to_vec(),
            period: q,
            return_matrix,
            exact_return,
            eigen,
            exact_eigenbasis,
        })
    }

    pub fn from_spec(spec: &CocycleSpec) -> Result<Self> {
        let word = spec
            .periodic_word()
            .ok_or_else(|| Error::InvalidSpec("no periodic point given".into()))?;
        Self::new(spec, word)
    }
}

#[derive(Clone, Debug)]
pub struct HomoclinicData {
    pub point: SymbolicPoint,
    pub l: usize,
    /// Â^l(ẑ).
    pub along_matrix: CMatrix,
    pub exact_along: Option<QMatrix>,
    /// H^s from f̂^l(ẑ) to p̂.
    pub stable_h: HolonomyMap,
    /// H^u from p̂ to ẑ.
    pub unstable_h: HolonomyMap,
}

impl HomoclinicData {
    pub fn new(
        spec: &CocycleSpec,
        pd: &PeriodicData,
        z: SymbolicPoint,
        l: usize,
        opts: HolonomyOptions,
    ) -> Result<Self> {
        if l == 0 || l % pd.period != 0 {
            return Err(Error::InvalidSpec(format!(
                "l = {l} is not a positive multiple of the period {}",
                pd.period
            )));
        }
        spec.validate_point(&z)?;
        if !z.same_past(&pd.point) {
            return Err(Error::NotOnLocalSet("unstable"));
        }
        let end = z.shift(l as i64);
        if !end.same_future(&pd.point) {
            return Err(Error::NotOnLocalSet("stable"));
        }
        let along_matrix = spec.product_along(&z, l);
        let exact_along = if spec.is_locally_constant() {
            let w: Vec<Symbol> = (0..l as i64).map(|n| z.at(n)).collect();
            spec.word_product_exact(&w)
        } else {
            None
        };
        let unstable_h = unstable_holonomy(spec, &pd.point, &z, opts.tol, opts.cap)?;
        let stable_h = stable_holonomy(spec, &end, &pd.point, opts.tol, opts.cap)?;
        Ok(Self {
            point: z,
            l,
            along_matrix,
            exact_along,
            stable_h,
            unstable_h,
        })
    }

    pub fn from_spec(spec: &CocycleSpec, pd: &PeriodicData, opts: HolonomyOptions) -> Result<Self> {
        let (z, l) = spec
            .homoclinic_point()
            .ok_or_else(|| Error::InvalidSpec("no homoclinic point given".into()))?;
        Self::new(spec, pd, z, l, opts)
    }
}

/// ψ = H^s · Â^l(ẑ) · H^u written in the eigenbasis of Â^q(p̂).
#[derive(Clone, Debug)]
pub struct TransitionMap {
    pub matrix: CMatrix,
    /// Columns are the eigenvectors used as basis.
    pub basis: CMatrix,
    /// Same map over the rational eigenbasis, when both are available.
    pub exact: Option<QMatrix>,
}

pub fn transition_map(pd: &PeriodicData, hd: &HomoclinicData) -> Result<TransitionMap> {
    let psi = &hd.stable_h.matrix * &hd.along_matrix * &hd.unstable_h.matrix;
    let basis = pd.eigen.eigenvectors.clone();
    let matrix = inverse(&basis)? * psi * &basis;
    let exact = match (&pd.exact_eigenbasis, &hd.exact_along) {
        (Some((_, v)), Some(a)) => {
            let vinv = v.inverse()?;
            Some(&(&vinv * a) * v)
        }
        _ => None,
    };
    Ok(TransitionMap {
        matrix,
        basis,
        exact,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PinchingReport {
    pub ok: bool,
    /// min_i |λ_i|/|λ_{i+1}| − 1.
    pub gap: f64,
    pub exact: bool,
}

pub fn check_pinching(pd: &PeriodicData, rel_gap_tol: f64) -> Result<PinchingReport> {
    if pd.eigen.max_residual > EIGEN_RESIDUAL_TOL {
        return Err(Error::EigenResidual {
            residual: pd.eigen.max_residual,
        });
    }
    if let Some((values, _)) = &pd.exact_eigenbasis {
        let moduli: Vec<Rational> = values.iter().map(|v| v.abs()).collect();
        let ok = moduli.windows(2).all(|w| w[0] > w[1]);
        let gap = moduli
            .windows(2)
            .map(|w| {
                if w[1].is_zero() {
                    f64::INFINITY
                } else {
                    to_f64(&(&w[0] / &w[1])) - 1.0
                }
            })
            .fold(f64::INFINITY, f64::min);
        return Ok(PinchingReport {
            ok,
            gap,
            exact: true,
        });
    }
    let gap = pinching_gap(&pd.eigen);
    Ok(PinchingReport {
        ok: gap >= rel_gap_tol,
        gap,
        exact: false,
    })
}

fn pinching_gap(eigen: &EigenData) -> f64 {
    let moduli: Vec<f64> = eigen.eigenvalues.iter().map(|z| z.norm()).collect();
    moduli
        .windows(2)
        .map(|w| if w[1] == 0.0 { f64::INFINITY } else { w[0] / w[1] - 1.0 })
        .fold(f64::INFINITY, f64::min)
}

/// Rows and columns of a minor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinorWitness {
    pub rows: IndexSubset,
    pub cols: IndexSubset,
}

impl MinorWitness {
    pub fn to_json(&self) -> Value {
        json!({ "rows": self.rows.one_based(), "cols": self.cols.one_based() })
    }
}

#[derive(Clone, Debug)]
pub struct TwistingReport {
    pub ok: bool,
    /// Exact mode: smallest |minor|. Float mode: smallest |minor| divided
    /// by the product of the norms of its rows.
    pub smallest_minor: f64,
    pub witness: Option<MinorWitness>,
    pub exact: bool,
}

/// Every minor of every size must be nonzero. Exact mode needs the rational
/// form of the transition map and otherwise falls back to floats.
pub fn check_twisting(tm: &TransitionMap, exact: bool, zero_tol: f64) -> Result<TwistingReport> {
    match (&tm.exact, exact) {
        (Some(q), true) => Ok(twisting_exact(q)),
        _ => twisting_float(&tm.matrix, zero_tol),
    }
}

pub fn twisting_exact(m: &QMatrix) -> TwistingReport {
    let d = m.nrows();
    let mut smallest: Option<Rational> = None;
    let mut witness = None;
    for ell in 1..=d {
        for rows in subsets(d, ell) {
            for cols in subsets(d, ell) {
                let minor = m
                    .submatrix(&rows, &cols)
                    .determinant()
                    .expect("square submatrix")
                    .abs();
                if minor.is_zero() && witness.is_none() {
                    witness = Some(witness_of(rows.clone(), cols, d));
                }
                if smallest.as_ref().is_none_or(|s| &minor < s) {
                    smallest = Some(minor);
                }
            }
        }
    }
    TwistingReport {
        ok: witness.is_none(),
        smallest_minor: smallest.map_or(0.0, |s| to_f64(&s)),
        witness,
        exact: true,
    }
}

pub fn twisting_float(m: &CMatrix, zero_tol: f64) -> Result<TwistingReport> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let d = m.nrows();
    let mut smallest = f64::INFINITY;
    let mut witness = None;
    for ell in 1..=d {
        for rows in subsets(d, ell) {
            for cols in subsets(d, ell) {
                let sub = CMatrix::from_fn(ell, ell, |i, j| m[(rows[i], cols[j])]);
                let scale: f64 = (0..ell).map(|i| sub.row(i).norm()).product();
                let rel = if scale == 0.0 {
                    0.0
                } else {
                    sub.determinant().norm() / scale
                };
                if rel <= zero_tol && witness.is_none() {
                    witness = Some(witness_of(rows.clone(), cols, d));
                }
                smallest = smallest.min(rel);
            }
        }
    }
    Ok(TwistingReport {
        ok: witness.is_none(),
        smallest_minor: smallest,
        witness,
        exact: false,
    })
}

fn witness_of(rows: Vec<usize>, cols: Vec<usize>, d: usize) -> MinorWitness {
    MinorWitness {
        rows: IndexSubset::new(rows, d).expect("valid subset"),
        cols: IndexSubset::new(cols, d).expect("valid subset"),
    }
}

#[derive(Clone, Debug)]
pub struct SimplicityVerdict {
    pub pinching: PinchingReport,
    pub twisting: TwistingReport,
    pub simple: bool,
}

impl SimplicityVerdict {
    pub fn to_json(&self) -> Value {
        json!({
            "pinching": { "ok": self.pinching.ok, "gap": finite_or_null(self.pinching.gap) },
            "twisting": {
                "ok": self.twisting.ok,
                "smallest_minor": self.twisting.smallest_minor,
                "witness": self.twisting.witness.as_ref().map(MinorWitness::to_json),
            },
            "simple": self.simple,
        })
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimplicityOptions {
    pub rel_gap_tol: f64,
    pub zero_tol: f64,
    pub exact: bool,
    pub holonomy: HolonomyOptions,
}

impl Default for SimplicityOptions {
    fn default() -> Self {
        Self {
            rel_gap_tol: DEFAULT_REL_GAP_TOL,
            zero_tol: DEFAULT_ZERO_TOL,
            exact: true,
            holonomy: HolonomyOptions::default(),
        }
    }
}

pub fn check_simple(
    pd: &PeriodicData,
    hd: &HomoclinicData,
    opts: SimplicityOptions,
) -> Result<SimplicityVerdict> {
    let pinching = check_pinching(pd, opts.rel_gap_tol)?;
    let tm = transition_map(pd, hd)?;
    let twisting = check_twisting(&tm, opts.exact, opts.zero_tol)?;
    Ok(SimplicityVerdict {
        simple: pinching.ok && twisting.ok,
        pinching,
        twisting,
    })
}

/// Runs the check on the periodic and homoclinic points declared in the spec.
pub fn check_simple_spec(spec: &CocycleSpec, opts: SimplicityOptions) -> Result<SimplicityVerdict> {
    let pd = PeriodicData::from_spec(spec)?;
    let hd = HomoclinicData::from_spec(spec, &pd, opts.holonomy)?;
    check_simple(&pd, &hd, opts)
}

/// B̂(x) = Â(f⁻¹x)^* written over the forward shift via time reversal.
pub fn adjoint_cocycle(spec: &CocycleSpec) -> CocycleSpec {
    spec.adjoint()
}

#[derive(Clone, Debug)]
pub struct MonoidConfig {
    pub max_word_len: usize,
    pub trials: usize,
    /// Dimension of the sampled F; the G_i have the complementary dimension.
    pub ell: usize,
    pub subspaces: usize,
    /// Word length bound for the exhaustive twisting search.
    pub twist_len: usize,
    pub wedge_tol: f64,
}

impl Default for MonoidConfig {
    fn default() -> Self {
        Self {
            max_word_len: 20,
            trials: 200,
            ell: 1,
            subspaces: 3,
            twist_len: 6,
            wedge_tol: DEFAULT_TOL,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MonoidReport {
    /// Largest min_ℓ σ_ℓ/σ_{ℓ+1} seen over sampled words.
    pub best_eccentricity: f64,
    pub best_eccentricity_word: Vec<usize>,
    /// Word B with B(F) ∩ G_i = {0} for every sampled G_i, if found.
    pub twisting_word: Option<Vec<usize>>,
    pub twisting_margin: f64,
    pub words_tried: usize,
}

/// B = g_{w_{n−1}} ⋯ g_{w_0}.
pub fn monoid_word_product(generators: &[CMatrix], word: &[usize]) -> CMatrix {
    let d = generators[0].nrows();
    word.iter()
        .fold(CMatrix::identity(d, d), |acc, &g| &generators[g] * acc)
}

/// min over ℓ of σ_ℓ/σ_{ℓ+1}.
pub fn min_eccentricity(b: &CMatrix) -> Result<f64> {
    let d = b.nrows();
    if d < 2 {
        return Ok(f64::INFINITY);
    }
    let mut best = f64::INFINITY;
    for ell in 1..d {
        best = best.min(eccentricity(b, ell)?.value);
    }
    Ok(best)
}

/// Smallest |det[Q_{BF} | Q_G]| over the G_i, with orthonormal bases. It
/// vanishes exactly when some intersection B(F) ∩ G_i is nontrivial.
pub fn intersection_margin(b: &CMatrix, f: &CMatrix, gs: &[CMatrix]) -> Result<f64> {
    let bf = orthonormalize(&(b * f), 1e-12)?;
    let d = b.nrows();
    let mut margin = f64::INFINITY;
    for g in gs {
        let q = orthonormalize(g, 1e-12)?;
        if bf.ncols() + q.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "dim F + dim G = {} in dimension {d}",
                bf.ncols() + q.ncols()
            )));
        }
        let mut m = CMatrix::zeros(d, d);
        m.columns_mut(0, bf.ncols()).copy_from(&bf);
        m.columns_mut(bf.ncols(), q.ncols()).copy_from(&q);
        margin = margin.min(m.determinant().norm());
    }
    Ok(margin)
}

/// Words in shortlex order up to `max_len`, returning the first with all
/// intersections trivial.
pub fn twisting_search(
    generators: &[CMatrix],
    f: &CMatrix,
    gs: &[CMatrix],
    max_len: usize,
    wedge_tol: f64,
) -> Result<Option<(Vec<usize>, f64)>> {
    let k = generators.len();
    for len in 1..=max_len {
        let mut word = vec![0usize; len];
        loop {
            let b = monoid_word_product(generators, &word);
            let margin = intersection_margin(&b, f, gs)?;
            if margin > wedge_tol {
                return Ok(Some((word, margin)));
            }
            let mut pos = len;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                word[pos] += 1;
                if word[pos] < k {
                    break;
                }
                word[pos] = 0;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
    }
    Ok(None)
}

/// Samples words for eccentricity and random (F, G_i) for twisting.
/// Absence of a witness is inconclusive.
pub fn monoid_pinching_twisting(
    generators: &[CMatrix],
    cfg: &MonoidConfig,
    rng: RandomSource,
) -> Result<MonoidReport> {
    if generators.is_empty() {
        return Err(Error::Precondition("no generators".into()));
    }
    let d = generators[0].nrows();
    for g in generators {
        inverse(g).map_err(|_| Error::Precondition("generators must be invertible".into()))?;
    }
    let mut r = rng.rng();
    let mut best = (0.0f64, Vec::new());
    let mut tried = 0;
    for len in 1..=cfg.max_word_len {
        let per_len = (cfg.trials / cfg.max_word_len).max(1);
        for _ in 0..per_len {
            let word: Vec<usize> = (0..len).map(|_| r.random_range(0..generators.len())).collect();
            let e = min_eccentricity(&monoid_word_product(generators, &word))?;
            tried += 1;
            if e.is_finite() && e.partial_cmp(&best.0) == Some(Ordering::Greater) {
                best = (e, word);
            }
        }
    }
    let (twisting_word, twisting_margin) = if cfg.ell == 0 || cfg.ell >= d {
        (None, 0.0)
    } else {
        let f = gaussian_matrix(&mut r, d, cfg.ell);
        let gs: Vec<CMatrix> = (0..cfg.subspaces)
            .map(|_| gaussian_matrix(&mut r, d, d - cfg.ell))
            .collect();
        match twisting_search(generators, &f, &gs, cfg.twist_len, cfg.wedge_tol)? {
            Some((w, m)) => (Some(w), m),
            None => (None, 0.0),
        }
    };
    Ok(MonoidReport {
        best_eccentricity: best.0,
        best_eccentricity_word: best.1,
        twisting_word,
        twisting_margin,
        words_tried: tried,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::MatrixFamily;
    use crate::exact::{q, qf};
    use crate::numeric::{c, diag, frobenius, real_matrix, C64};
    use crate::shift_space::MarkovMeasure;
    use proptest::prelude::*;

    fn exact_spec(mats: Vec<QMatrix>, insert: Vec<Symbol>, l: Option<usize>) -> CocycleSpec {
        let a = mats.len();
        CocycleSpec::new(MatrixFamily::Exact(mats), MarkovMeasure::uniform(a))
            .unwrap()
            .with_periodic(vec![0])
            .unwrap()
            .with_homoclinic(insert, l)
            .unwrap()
    }

    fn verdict(spec: &CocycleSpec) -> SimplicityVerdict {
        check_simple_spec(spec, SimplicityOptions::default()).unwrap()
    }

    fn pd_of(m: QMatrix) -> PeriodicData {
        let spec = exact_spec(vec![m.clone(), m], vec![1], None);
        PeriodicData::from_spec(&spec).unwrap()
    }

    #[test]
    fn pinching_examples() {
        let pd = pd_of(QMatrix::from_i64(3, 3, &[3, 0, 0, 0, 2, 0, 0, 0, 1]));
        let r = check_pinching(&pd, DEFAULT_REL_GAP_TOL).unwrap();
        assert!(r.ok && r.exact);
        assert!((r.gap - 0.5).abs() < 1e-15);

        let (s, co) = (std::f64::consts::FRAC_PI_3.sin(), std::f64::consts::FRAC_PI_3.cos());
        let rot = real_matrix(2, 2, &[co, -s, s, co]);
        let spec = CocycleSpec::new(MatrixFamily::Float(vec![rot]), MarkovMeasure::uniform(1))
            .unwrap();
        let pd = PeriodicData::new(&spec, &[0]).unwrap();
        let r = check_pinching(&pd, DEFAULT_REL_GAP_TOL).unwrap();
        assert!(!r.ok && !r.exact);

        let pd = pd_of(QMatrix::from_i64(2, 2, &[1, 0, 0, -1]));
        assert!(!check_pinching(&pd, DEFAULT_REL_GAP_TOL).unwrap().ok);
    }

    #[test]
    fn twisting_examples() {
        let r = twisting_exact(&QMatrix::identity(2));
        assert!(!r.ok);
        let w = r.witness.unwrap();
        assert_eq!((w.rows.one_based(), w.cols.one_based()), (vec![1], vec![2]));

        let r = twisting_exact(&QMatrix::from_i64(2, 2, &[1, 1, 1, 1]));
        assert!(!r.ok);
        let w = r.witness.unwrap();
        assert_eq!(w.rows.len(), 2);

        let r = twisting_exact(&QMatrix::from_i64(2, 2, &[2, 1, 1, 1]));
        assert!(r.ok && r.witness.is_none());
        assert_eq!(r.smallest_minor, 1.0);

        let r = twisting_float(&real_matrix(2, 2, &[2.0, 1.0, 1.0, 1.0]), DEFAULT_ZERO_TOL).unwrap();
        assert!(r.ok);
        let r = twisting_float(&real_matrix(2, 2, &[1.0, 1.0, 1.0, 1.0]), DEFAULT_ZERO_TOL).unwrap();
        assert!(!r.ok);
    }

    #[test]
    fn transition_map_is_word_product_in_eigenbasis() {
        let a0 = QMatrix::from_i64(2, 2, &[2, 0, 0, 1]);
        let a1 = QMatrix::from_i64(2, 2, &[1, 1, 1, 2]);
        let spec = exact_spec(vec![a0.clone(), a1.clone()], vec![1], Some(2));
        let pd = PeriodicData::from_spec(&spec).unwrap();
        let hd = HomoclinicData::from_spec(&spec, &pd, HolonomyOptions::default()).unwrap();
        let tm = transition_map(&pd, &hd).unwrap();
        let expected = &a0 * &a1;
        assert_eq!(tm.exact.as_ref().unwrap(), &expected);
        assert!(frobenius(&(&tm.matrix - expected.to_complex())) < 1e-12);

        let spec = exact_spec(vec![a0.clone(), QMatrix::identity(2)], vec![1], None);
        let pd = PeriodicData::from_spec(&spec).unwrap();
        let hd = HomoclinicData::from_spec(&spec, &pd, HolonomyOptions::default()).unwrap();
        assert_eq!(transition_map(&pd, &hd).unwrap().exact.unwrap(), QMatrix::identity(2));
    }

    #[test]
    fn simple_examples() {
        let a0 = QMatrix::from_i64(2, 2, &[2, 0, 0, 1]);
        let a1 = QMatrix::from_i64(2, 2, &[1, 1, 1, 2]);
        let v = verdict(&exact_spec(vec![a0, a1], vec![1], None));
        assert!(v.pinching.ok && v.twisting.ok && v.simple);
        assert!(v.twisting.exact);

        let v = verdict(&exact_spec(
            vec![QMatrix::identity(2), QMatrix::identity(2)],
            vec![1],
            None,
        ));
        assert!(!v.pinching.ok && !v.simple);

        let a0 = QMatrix::from_i64(3, 3, &[4, 0, 0, 0, 2, 0, 0, 0, 1]);
        let a1 = QMatrix::from_i64(3, 3, &[1, 1, 1, 1, 2, 0, 1, 3, 1]);
        let v = verdict(&exact_spec(vec![a0, a1], vec![1], None));
        assert!(v.pinching.ok && !v.twisting.ok && !v.simple);
        let w = v.twisting.witness.unwrap();
        assert_eq!((w.rows.one_based(), w.cols.one_based()), (vec![2], vec![3]));
    }

    #[test]
    fn verdict_json_shape() {
        let v = verdict(&exact_spec(
            vec![QMatrix::from_i64(2, 2, &[2, 0, 0, 1]), QMatrix::identity(2)],
            vec![1],
            None,
        ));
        let j = v.to_json();
        assert_eq!(j["pinching"]["ok"], json!(true));
        assert_eq!(j["twisting"]["ok"], json!(false));
        assert_eq!(j["twisting"]["witness"]["rows"], json!([1]));
        assert_eq!(j["simple"], json!(false));
    }

    #[test]
    fn homoclinic_point_must_be_homoclinic() {
        let spec = exact_spec(
            vec![QMatrix::from_i64(2, 2, &[2, 0, 0, 1]), QMatrix::identity(2)],
            vec![1],
            None,
        );
        let pd = PeriodicData::from_spec(&spec).unwrap();
        let (z, _) = spec.homoclinic_point().unwrap();
        let bad = HomoclinicData::new(&spec, &pd, z.shift(-1), 1, HolonomyOptions::default());
        assert!(matches!(bad, Err(Error::NotOnLocalSet(_))));
    }

    #[test]
    fn perturbed_transition_map_is_continuous() {
        let a0 = real_matrix(2, 2, &[1.3, 0.0, 0.0, 1.0]);
        let a1 = real_matrix(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        let base = CocycleSpec::new(
            MatrixFamily::Float(vec![a0, a1]),
            MarkovMeasure::uniform(2),
        )
        .unwrap()
        .with_periodic(vec![0])
        .unwrap()
        .with_homoclinic(vec![1], None)
        .unwrap();
        let eps = 1e-6;
        let perturbed = base
            .clone()
            .with_perturbation(crate::cocycle::Perturbation {
                epsilon: eps,
                nu: 1.0,
                past: real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0]),
                future: real_matrix(2, 2, &[1.0, 0.0, 0.0, -1.0]),
                weights: vec![0.0, 1.0],
            })
            .unwrap();
        let psi = |s: &CocycleSpec| {
            let pd = PeriodicData::from_spec(s).unwrap();
            let hd = HomoclinicData::from_spec(s, &pd, HolonomyOptions::default()).unwrap();
            transition_map(&pd, &hd).unwrap().matrix
        };
        assert!(frobenius(&(psi(&base) - psi(&perturbed))) < 10.0 * eps);
    }

    fn rational_corpus_matrix(entries: &[i64]) -> QMatrix {
        QMatrix::from_i64(3, 3, entries)
    }

    #[test]
    fn twisting_matches_invariant_subspace_formulation() {
        let a0 = rational_corpus_matrix(&[3, 1, 0, 0, 2, 1, 0, 0, 1]);
        for a1 in [
            rational_corpus_matrix(&[1, 2, 1, 1, 1, 3, 2, 1, 1]),
            rational_corpus_matrix(&[1, 0, 1, 1, 1, 3, 2, 1, 1]),
            rational_corpus_matrix(&[2, 1, 1, 1, 1, 1, 1, 1, 2]),
        ] {
            let spec = exact_spec(vec![a0.clone(), a1.clone()], vec![1], None);
            let pd = PeriodicData::from_spec(&spec).unwrap();
            let hd = HomoclinicData::from_spec(&spec, &pd, HolonomyOptions::default()).unwrap();
            let tm = transition_map(&pd, &hd).unwrap();
            let verdict = twisting_exact(tm.exact.as_ref().unwrap()).ok;
            let (_, v) = pd.exact_eigenbasis.clone().unwrap();
            let psi = hd.exact_along.clone().unwrap();
            let mut all = true;
            for r in 1..3 {
                for e in subsets(3, r) {
                    for f in subsets(3, 3 - r) {
                        let mut cols: Vec<Vec<Rational>> =
                            e.iter().map(|&j| psi.mul_vec(&v.column(j))).collect();
                        cols.extend(f.iter().map(|&j| v.column(j)));
                        let m = QMatrix::from_columns(3, &cols);
                        all &= !m.determinant().unwrap().is_zero();
                    }
                }
            }
            all &= !psi.determinant().unwrap().is_zero();
            assert_eq!(verdict, all);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn twisting_invariant_under_rescaling(
            entries in proptest::collection::vec(-3i64..4, 9),
            scales in proptest::collection::vec((1i64..7, 1i64..7, proptest::bool::ANY), 3),
        ) {
            let m = QMatrix::from_i64(3, 3, &entries);
            let s = QMatrix::diagonal(
                &scales
                    .iter()
                    .map(|&(p, d, neg)| if neg { -qf(p, d) } else { qf(p, d) })
                    .collect::<Vec<_>>(),
            );
            let rescaled = &(&s.inverse().unwrap() * &m) * &s;
            prop_assert_eq!(twisting_exact(&m).ok, twisting_exact(&rescaled).ok);
        }

        #[test]
        fn adjoint_preserves_verdict(
            top in proptest::collection::vec(1i64..5, 3),
            entries in proptest::collection::vec(-2i64..3, 9),
            insert_len in 1usize..3,
        ) {
            let a0 = QMatrix::diagonal(&[q(top[0] + 8), q(top[1] + 4), q(top[2])]);
            let a1 = QMatrix::from_i64(3, 3, &entries);
            prop_assume!(!a1.determinant().unwrap().is_zero());
            let insert: Vec<Symbol> = std::iter::once(1).chain(std::iter::repeat_n(1, insert_len - 1)).collect();
            let spec = exact_spec(vec![a0, a1], insert, None);
            let v = verdict(&spec);
            let w = verdict(&adjoint_cocycle(&spec));
            prop_assert_eq!(v.pinching.ok, w.pinching.ok);
            prop_assert_eq!(v.twisting.ok, w.twisting.ok);
            prop_assert_eq!(v.simple, w.simple);
        }
    }

    #[test]
    fn adjoint_examples() {
        let sym = real_matrix(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let spec = CocycleSpec::new(MatrixFamily::Float(vec![sym.clone()]), MarkovMeasure::uniform(1))
            .unwrap();
        assert_eq!(adjoint_cocycle(&spec).matrices()[0], sym);

        let a = CMatrix::from_fn(2, 2, |i, j| C64::new((i + 2 * j) as f64, (i * j) as f64 + 1.0));
        let spec = CocycleSpec::new(MatrixFamily::Float(vec![a.clone()]), MarkovMeasure::uniform(1))
            .unwrap();
        assert_eq!(adjoint_cocycle(&spec).matrices()[0], a.adjoint());

        let spec = exact_spec(
            vec![QMatrix::from_i64(2, 2, &[2, 1, 0, 1]), QMatrix::from_i64(2, 2, &[1, 0, 3, 1])],
            vec![1, 0, 1],
            None,
        );
        let back = adjoint_cocycle(&adjoint_cocycle(&spec));
        assert_eq!(back.exact_matrices(), spec.exact_matrices());
        assert_eq!(back.periodic_word(), spec.periodic_word());
    }

    #[test]
    fn monoid_examples() {
        let cfg = MonoidConfig {
            max_word_len: 12,
            trials: 12,
            ..MonoidConfig::default()
        };
        let r = monoid_pinching_twisting(&[diag(&[2.0, 1.0])], &cfg, RandomSource::new(1, 0)).unwrap();
        assert!((r.best_eccentricity - 4096.0).abs() < 1e-6);

        let th = 0.7f64;
        let rot = real_matrix(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let rot2 = real_matrix(2, 2, &[(2.0 * th).cos(), -(2.0 * th).sin(), (2.0 * th).sin(), (2.0 * th).cos()]);
        let r = monoid_pinching_twisting(&[rot, rot2], &cfg, RandomSource::new(2, 0)).unwrap();
        assert!(r.best_eccentricity < 1.0 + 1e-9);

        let gens = [diag(&[2.0, 1.0]), real_matrix(2, 2, &[1.0, 1.0, 1.0, 2.0])];
        let e2 = CMatrix::from_column_slice(2, 1, &[c(0.0), c(1.0)]);
        let found = twisting_search(&gens, &e2, &[e2.clone()], 3, 1e-9).unwrap().unwrap();
        assert!(found.0.len() <= 3);
        assert!(intersection_margin(&monoid_word_product(&gens, &found.0), &e2, &[e2.clone()]).unwrap() > 1e-9);
        assert!(twisting_search(&gens[..1], &e2, &[e2.clone()], 3, 1e-9).unwrap().is_none());
    }

    #[test]
    fn simple_spec_gives_monoid_evidence() {
        let a0 = QMatrix::from_i64(3, 3, &[4, 0, 0, 0, 2, 0, 0, 0, 1]);
        let a1 = QMatrix::from_i64(3, 3, &[2, 1, 1, 1, 3, 1, 1, 1, 2]);
        let spec = exact_spec(vec![a0, a1], vec![1], None);
        assert!(verdict(&spec).simple);
        let gens = spec.matrices().to_vec();
        let mut r = RandomSource::new(9, 0).rng();
        for ell in 1..3 {
            let f = gaussian_matrix(&mut r, 3, ell);
            let gs: Vec<CMatrix> = (0..3).map(|_| gaussian_matrix(&mut r, 3, 3 - ell)).collect();
            let witness = (1..8).find(|&n| {
                let mut w = vec![0; n];
                w.push(1);
                w.extend(vec![0; n]);
                let b = monoid_word_product(&gens, &w);
                min_eccentricity(&b).unwrap() > 1e3 && intersection_margin(&b, &f, &gs).unwrap() > 1e-9
            });
            assert!(witness.is_some(), "no witness for ell = {ell}");
        }
        let rep = monoid_pinching_twisting(&gens, &MonoidConfig::default(), RandomSource::new(9, 1)).unwrap();
        assert!(rep.best_eccentricity > 1e3);
        assert!(rep.twisting_word.is_some());
    }
}
