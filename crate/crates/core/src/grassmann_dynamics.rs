//! Pushforwards of empirical measures on Grassmannians along backward
//! orbits: Dirac convergence, eccentricity growth and the most expanded
//! subspace.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::{CocycleSpec, PERTURBATION_TERMS};
use crate::error::{Error, Result};
use crate::exterior::{binomial, exterior_power, plucker_embed, GrassmannPoint, MultiVector};
use crate::lyapunov::{ls_slope, ZorichOrbit};
use crate::numeric::{c, gaussian_matrix, operator_norm, svd, CMatrix, RandomSource, C64};
use crate::rauzy_zorich::PermutationPair;
use crate::shift_space::Symbol;

/// Weighted atoms on Grass(ℓ, d).
#[derive(Clone, Debug)]
pub struct EmpiricalFiberMeasure {
    atoms: Vec<(GrassmannPoint, f64)>,
}

impl EmpiricalFiberMeasure {
    pub fn new(atoms: Vec<(GrassmannPoint, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        let (d, ell) = (atoms[0].0.d(), atoms[0].0.ell());
        if atoms.iter().any(|(p, _)| p.d() != d || p.ell() != ell) {
            return Err(Error::DimensionMismatch("atoms on different Grassmannians".into()));
        }
        if atoms.iter().any(|(_, w)| !(*w > 0.0)) {
            return Err(Error::InvalidMeasure("weights must be positive".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        Ok(Self { atoms })
    }

    /// Equal-weight atoms spanned by Gaussian frames, i.e. drawn from the
    /// unitarily invariant distribution.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d: usize, ell: usize, count: usize) -> Result<Self> {
        if ell == 0 || ell > d {
            return Err(Error::DegreeOutOfRange(format!("ell = {ell} with d = {d}")));
        }
        let w = 1.0 / count as f64;
        let atoms = (0..count)
            .map(|_| Ok((plucker_embed(&gaussian_matrix(rng, d, ell))?, w)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[(GrassmannPoint, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn dispersion(&self) -> DispersionStat {
        let vs: Vec<(MultiVector, f64)> = self.atoms.iter().map(|(p, w)| (p.plucker().clone(), *w)).collect();
        dispersion_of(&vs)
    }
}

/// Image of each atom under the action of `l` on ℓ-subspaces.
pub fn pushforward(measure: &EmpiricalFiberMeasure, l: &CMatrix) -> Result<EmpiricalFiberMeasure> {
    let d = measure.atoms[0].0.d();
    if l.nrows() != d || l.ncols() != d {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix on dimension {d}", l.nrows(), l.ncols())));
    }
    let atoms = measure
        .atoms
        .par_iter()
        .map(|(p, w)| {
            let image = l * p.basis();
            let point = plucker_embed(&image).map_err(|_| Error::InKernel {
                norm: MultiVector::wedge_columns(&image).norm(),
            })?;
            Ok((point, *w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalFiberMeasure { atoms })
}

#[derive(Clone, Debug)]
pub struct DispersionStat {
    /// Extrinsic mean projected back to the Grassmannian; the nearest atom
    /// when the mean is not decomposable.
    pub mean_point: GrassmannPoint,
    /// Weighted mean squared Fubini–Study distance to the extrinsic mean.
    pub dispersion: f64,
}

/// Extrinsic mean: principal eigenvector of Σ w ωω*.
fn extrinsic_mean(vs: &[(MultiVector, f64)]) -> MultiVector {
    let n = vs[0].0.coeffs().len();
    let mut h = CMatrix::zeros(n, n);
    for (v, w) in vs {
        let u = v.as_column() / c(v.norm());
        h += (&u * u.adjoint()) * c(*w);
    }
    let eig = h.symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let col: Vec<C64> = eig.eigenvectors.column(top).iter().copied().collect();
    MultiVector::from_coeffs(vs[0].0.d(), vs[0].0.ell(), col).expect("sizes match")
}

fn dispersion_of(vs: &[(MultiVector, f64)]) -> DispersionStat {
    let mean = extrinsic_mean(vs);
    let dists: Vec<f64> = vs.iter().map(|(v, _)| crate::exterior::fs_distance(v, &mean)).collect();
    let dispersion = vs.iter().zip(&dists).map(|((_, w), d)| w * d * d).sum();
    let mean_point = GrassmannPoint::from_multivector(&mean).unwrap_or_else(|_| {
        let best = dists
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("nonempty");
        GrassmannPoint::from_multivector(&vs[best].0).expect("atoms are decomposable")
    });
    DispersionStat { mean_point, dispersion }
}

/// Matrices along a sampled two-sided orbit of x̂: `past[k]` is A(f^{−k−1}x̂)
/// and `future[k]` is A(f^k x̂).
#[derive(Clone, Debug)]
pub struct TwoSidedOrbit {
    pub past: Vec<CMatrix>,
    pub future: Vec<CMatrix>,
}

impl TwoSidedOrbit {
    /// Orbit of the adjoint cocycle over the inverse map: its past is
    /// A(x̂)*, A(f x̂)*, ….
    pub fn adjoint(&self) -> Self {
        Self {
            past: self.future.iter().map(|m| m.adjoint()).collect(),
            future: self.past.iter().map(|m| m.adjoint()).collect(),
        }
    }
}

/// Where orbits come from.
#[derive(Clone, Debug)]
pub enum CocycleSource<'a> {
    Spec(&'a CocycleSpec),
    /// Dual Zorich cocycle Z^{−1*} on ℝ^d.
    Zorich(PermutationPair),
}

impl CocycleSource<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Self::Spec(s) => s.dim(),
            Self::Zorich(p) => p.d(),
        }
    }

    /// Two-sided orbit with `n` matrices on each side.
    pub fn sample_orbit(&self, n: usize, source: RandomSource) -> Result<TwoSidedOrbit> {
        match self {
            Self::Spec(spec) => sample_spec_orbit(spec, n, source),
            Self::Zorich(pair) => {
                let mut orbit = ZorichOrbit::random(pair.clone(), source, false, u64::MAX);
                let d = pair.d();
                let mut mats = Vec::with_capacity(2 * n);
                for _ in 0..2 * n {
                    let z = orbit.next_step()?;
                    let mut m = CMatrix::identity(d, d);
                    for &(s, k) in &z.counts {
                        m[(s - 1, z.winner - 1)] += c(k as f64);
                    }
                    mats.push(m);
                }
                let future = mats.split_off(n);
                mats.reverse();
                Ok(TwoSidedOrbit { past: mats, future })
            }
        }
    }
}

fn sample_spec_orbit(spec: &CocycleSpec, n: usize, source: RandomSource) -> Result<TwoSidedOrbit> {
    let mu = spec.measure();
    let back = mu.reversed();
    let rows = |m: &crate::shift_space::MarkovMeasure| {
        (0..m.size())
            .map(|i| WeightedIndex::new(m.transition()[i].iter().copied()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidMeasure(e.to_string()))
    };
    let (fwd_rows, back_rows) = (rows(mu)?, rows(&back)?);
    let mut rng = source.rng();
    let start = WeightedIndex::new(mu.stationary().iter().copied()).map_err(|e| Error::InvalidMeasure(e.to_string()))?;
    let k = if spec.is_locally_constant() { 0 } else { PERTURBATION_TERMS };
    let x0 = start.sample(&mut rng) as Symbol;
    let mut future = vec![x0];
    while future.len() < n + k + 1 {
        let last = *future.last().expect("nonempty") as usize;
        future.push(fwd_rows[last].sample(&mut rng) as Symbol);
    }
    let mut past = Vec::with_capacity(n + k);
    let mut cur = x0;
    while past.len() < n + k {
        cur = back_rows[cur as usize].sample(&mut rng) as Symbol;
        past.push(cur);
    }
    let at = |i: i64| {
        if i >= 0 {
            future[i as usize]
        } else {
            past[(-i - 1) as usize]
        }
    };
    let matrix = |j: i64| {
        if k == 0 {
            spec.matrices()[at(j) as usize].clone()
        } else {
            spec.matrix_with(|m| at(j + m))
        }
    };
    Ok(TwoSidedOrbit {
        past: (1..=n as i64).map(|j| matrix(-j)).collect(),
        future: (0..n as i64).map(matrix).collect(),
    })
}

/// Λ^k of a right-growing product, kept at unit scale.
struct ExteriorProduct {
    k: usize,
    m: CMatrix,
    log_scale: f64,
}

impl ExteriorProduct {
    fn new(d: usize, k: usize) -> Self {
        let n = if k == 0 { 1 } else { binomial(d, k) };
        Self {
            k,
            m: CMatrix::identity(n, n),
            log_scale: 0.0,
        }
    }

    fn push_right(&mut self, step: &CMatrix) -> Result<()> {
        if self.k == 0 {
            return Ok(());
        }
        self.m = &self.m * exterior_power(step, self.k)?;
        let s = self.m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s == 0.0 || !s.is_finite() {
            return Err(Error::NonFinite);
        }
        self.m /= c(s);
        self.log_scale += s.ln();
        Ok(())
    }

    fn log_norm(&self) -> f64 {
        self.log_scale + operator_norm(&self.m).ln()
    }
}

/// Eccentricity at or below 1 + this marks a non-unique most expanded
/// subspace.
pub const NON_UNIQUE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub dispersion: f64,
    pub log_eccentricity: f64,
    /// FS distance between consecutive images of the most expanded subspace.
    pub fs_increment: f64,
    pub unique: bool,
}

#[derive(Clone, Debug)]
pub struct FiberTrace {
    pub ell: usize,
    pub rows: Vec<TraceRow>,
    pub dispersions: Vec<DispersionStat>,
    /// Image L_n(ζ_n) of the most expanded subspace at each step.
    pub most_expanded: Vec<GrassmannPoint>,
}

impl FiberTrace {
    /// Mean point of the final pushed measure.
    pub fn dirac_location(&self) -> Option<&GrassmannPoint> {
        self.dispersions.last().map(|s| &s.mean_point)
    }

    pub fn final_dispersion(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.dispersion)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "dispersion", "log_eccentricity", "fs_increment"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                format!("{:e}", r.dispersion),
                format!("{:e}", r.log_eccentricity),
                format!("{:e}", r.fs_increment),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("ascii")
    }
}

/// Pushes `initial` along Âⁿ(f^{−n}x̂) = A(f^{−1}x̂)⋯A(f^{−n}x̂) for n = 1..
/// past.len(), recording dispersion, log eccentricity and the image of the
/// most expanded subspace.
pub fn run_fiber_experiment(
    past: &[CMatrix],
    ell: usize,
    initial: Option<&EmpiricalFiberMeasure>,
) -> Result<FiberTrace> {
    let d = past.first().map(|m| m.nrows()).ok_or_else(|| Error::Precondition("empty orbit".into()))?;
    if ell == 0 || ell >= d {
        return Err(Error::DegreeOutOfRange(format!("ell = {ell} with d = {d}")));
    }
    if let Some(m) = initial {
        if m.atoms[0].0.d() != d || m.atoms[0].0.ell() != ell {
            return Err(Error::DimensionMismatch("initial measure on another Grassmannian".into()));
        }
    }
    let mut lower = ExteriorProduct::new(d, ell - 1);
    let mut mid = ExteriorProduct::new(d, ell);
    let mut upper = ExteriorProduct::new(d, ell + 1);
    let mut rows = Vec::with_capacity(past.len());
    let mut dispersions = Vec::new();
    let mut most_expanded: Vec<GrassmannPoint> = Vec::with_capacity(past.len());
    for (i, a) in past.iter().enumerate() {
        lower.push_right(a)?;
        mid.push_right(a)?;
        upper.push_right(a)?;
        let log_e = 2.0 * mid.log_norm() - lower.log_norm() - upper.log_norm();

        let f = svd(&mid.m)?;
        // SVD vectors of graded matrices jitter; a few power steps fix them
        let gram = &mid.m * mid.m.adjoint();
        let mut v = f.u.column(0).into_owned();
        for _ in 0..3 {
            v = &gram * v;
            v /= c(v.norm());
        }
        let col: Vec<C64> = v.iter().copied().collect();
        let point = GrassmannPoint::from_multivector(&MultiVector::from_coeffs(d, ell, col)?)?;
        let fs_increment = most_expanded.last().map_or(f64::NAN, |p| p.fs_distance(&point));
        most_expanded.push(point);

        let dispersion = match initial {
            Some(m) => {
                let images = m
                    .atoms
                    .par_iter()
                    .map(|(p, w)| {
                        let v = &mid.m * p.plucker().as_column();
                        let norm = v.norm();
                        if norm < 1e-300 {
                            return Err(Error::InKernel { norm });
                        }
                        let mv = MultiVector::from_coeffs(d, ell, v.iter().copied().collect())?;
                        Ok((mv, *w))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let stat = dispersion_of(&images);
                let x = stat.dispersion;
                dispersions.push(stat);
                x
            }
            None => f64::NAN,
        };
        rows.push(TraceRow {
            step: i + 1,
            dispersion,
            log_eccentricity: log_e,
            fs_increment,
            unique: log_e > NON_UNIQUE_TOL,
        });
    }
    Ok(FiberTrace {
        ell,
        rows,
        dispersions,
        most_expanded,
    })
}

/// Dispersion trace of a random initial measure pushed along a sampled
/// backward orbit.
pub fn dirac_convergence_experiment(
    source: &CocycleSource,
    ell: usize,
    orbit_length: usize,
    atom_count: usize,
    rng: RandomSource,
) -> Result<FiberTrace> {
    let orbit = source.sample_orbit(orbit_length, rng.substream(0))?;
    let initial = EmpiricalFiberMeasure::random(&mut rng.substream(1).rng(), source.dim(), ell, atom_count)?;
    run_fiber_experiment(&orbit.past, ell, Some(&initial))
}

#[derive(Clone, Debug, Serialize)]
pub struct EccentricityTrace {
    pub log_eccentricity: Vec<f64>,
    /// Least-squares slope over the second half.
    pub slope: f64,
    /// Batch-means standard error of the growth rate.
    pub slope_se: f64,
    /// Steps (1-based) where the most expanded subspace is not unique.
    pub non_unique_steps: Vec<usize>,
}

pub fn eccentricity_slope(log_e: &[f64]) -> (f64, f64) {
    let n = log_e.len();
    let half: Vec<(f64, f64)> = (n / 2..n).map(|i| ((i + 1) as f64, log_e[i])).collect();
    let slope = if half.len() >= 2 { ls_slope(&half) } else { f64::NAN };
    let batches = 20.min(n / 2).max(1);
    let len = n / batches;
    let rates: Vec<f64> = (0..batches)
        .filter(|_| len > 0)
        .map(|b| {
            let start = if b == 0 { 0.0 } else { log_e[b * len - 1] };
            (log_e[(b + 1) * len - 1] - start) / len as f64
        })
        .collect();
    if rates.len() < 2 {
        return (slope, 0.0);
    }
    let m = rates.iter().sum::<f64>() / rates.len() as f64;
    let var = rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (rates.len() - 1) as f64;
    (slope, (var / rates.len() as f64).sqrt())
}

pub fn eccentricity_divergence(
    source: &CocycleSource,
    ell: usize,
    orbit_length: usize,
    rng: RandomSource,
) -> Result<EccentricityTrace> {
    let orbit = source.sample_orbit(orbit_length, rng.substream(0))?;
    let trace = run_fiber_experiment(&orbit.past, ell, None)?;
    let log_eccentricity: Vec<f64> = trace.rows.iter().map(|r| r.log_eccentricity).collect();
    let (slope, slope_se) = eccentricity_slope(&log_eccentricity);
    Ok(EccentricityTrace {
        slope,
        slope_se,
        non_unique_steps: trace.rows.iter().filter(|r| !r.unique).map(|r| r.step).collect(),
        log_eccentricity,
    })
}

#[derive(Clone, Debug)]
pub struct TrackingTrace {
    pub points: Vec<GrassmannPoint>,
    /// FS distances between consecutive points.
    pub increments: Vec<f64>,
    pub non_unique_steps: Vec<usize>,
}

pub fn most_expanded_tracking(
    source: &CocycleSource,
    ell: usize,
    orbit_length: usize,
    rng: RandomSource,
) -> Result<TrackingTrace> {
    let orbit = source.sample_orbit(orbit_length, rng.substream(0))?;
    let trace = run_fiber_experiment(&orbit.past, ell, None)?;
    Ok(TrackingTrace {
        increments: trace.rows.iter().skip(1).map(|r| r.fs_increment).collect(),
        non_unique_steps: trace.rows.iter().filter(|r| !r.unique).map(|r| r.step).collect(),
        points: trace.most_expanded,
    })
}

#[derive(Clone, Debug)]
pub struct TransversalityReport {
    pub dirac: GrassmannPoint,
    pub adjoint_dirac: GrassmannPoint,
    /// FS distance from the Dirac location to the hyperplane of ℓ-vectors
    /// orthogonal to the adjoint Dirac location.
    pub distance: f64,
    pub ok: bool,
}

/// Dirac locations of the cocycle and of its adjoint on the same two-sided
/// orbit, and how far the first is from meeting the orthogonal complement
/// of the second.
pub fn transversality_check(
    source: &CocycleSource,
    ell: usize,
    orbit_length: usize,
    atom_count: usize,
    rng: RandomSource,
) -> Result<TransversalityReport> {
    let orbit = source.sample_orbit(orbit_length, rng.substream(0))?;
    let d = source.dim();
    let m = EmpiricalFiberMeasure::random(&mut rng.substream(1).rng(), d, ell, atom_count)?;
    let m_adj = EmpiricalFiberMeasure::random(&mut rng.substream(2).rng(), d, ell, atom_count)?;
    let fwd = run_fiber_experiment(&orbit.past, ell, Some(&m))?;
    let adj = run_fiber_experiment(&orbit.adjoint().past, ell, Some(&m_adj))?;
    let dirac = fwd.dirac_location().expect("nonempty").clone();
    let adjoint_dirac = adj.dirac_location().expect("nonempty").clone();
    let ip = dirac.plucker().inner(adjoint_dirac.plucker()).norm();
    let distance = ip.min(1.0).asin();
    Ok(TransversalityReport {
        dirac,
        adjoint_dirac,
        distance,
        ok: distance > 1e-3,
    })
}
