//! Lyapunov spectra by QR re-orthonormalization with batch-means errors,
//! the Δⁿ gap diagnostic, inducing rescale and adjoint checks.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cocycle::{CocycleSpec, PERTURBATION_TERMS};
use crate::error::{Error, Result};
use crate::numeric::{c, orthonormalize, real_singular_values, CMatrix, RandomSource, C64};
use crate::rauzy_zorich::{omega_matrix, zorich_step, PermutationPair, SimplexPoint, ZorichStep};
use crate::shift_space::{InducedSystem, MarkovMeasure, Symbol};

/// Frames are re-orthonormalized early once an entry exceeds this.
const FRAME_GROWTH_GUARD: f64 = 1e4;
pub const MIN_BATCHES: usize = 20;

/// A cocycle along one sampled orbit.
pub trait CocycleOrbit {
    fn dim(&self) -> usize;
    /// Frame whose span is tracked; its column count is the number of
    /// exponents estimated.
    fn initial_frame(&self) -> CMatrix;
    /// Left-multiplies `frame` by the next step matrix and returns log|det|
    /// of that matrix. Implementations may re-orthonormalize part way,
    /// adding the log|R_ii| they split off to `logs`.
    fn advance(&mut self, frame: &mut CMatrix, logs: &mut [f64]) -> Result<f64>;
}

/// Largest step count applied between two re-orthonormalizations.
const MAX_CHUNK: u64 = 1000;

/// Replaces `frame` by Q of its QR factorization and adds log|R_ii| to
/// `logs`. False if a diagonal entry of R vanishes.
fn reorthonormalize(frame: &mut CMatrix, logs: &mut [f64]) -> bool {
    if frame.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return false;
    }
    let qr = frame.clone().qr();
    let r = qr.r();
    for (i, l) in logs.iter_mut().enumerate() {
        let v = r[(i, i)].norm();
        if v == 0.0 || !v.is_finite() {
            return false;
        }
        *l += v.ln();
    }
    *frame = qr.q();
    true
}

/// Applies I + N with N² = 0 as m equal factors (I + N/m), re-orthonormalizing
/// between them. `apply` receives the scale 1/m.
fn apply_chunked(
    frame: &mut CMatrix,
    logs: &mut [f64],
    largest: u64,
    step: u64,
    apply: impl Fn(&mut CMatrix, f64),
) -> Result<()> {
    if largest <= MAX_CHUNK {
        apply(frame, 1.0);
        return Ok(());
    }
    let m = largest.div_ceil(MAX_CHUNK);
    let degenerate = || Error::DegenerateFrame { step: step as usize };
    if !reorthonormalize(frame, logs) {
        return Err(degenerate());
    }
    for _ in 0..m {
        apply(frame, 1.0 / m as f64);
        if !reorthonormalize(frame, logs) {
            return Err(degenerate());
        }
    }
    Ok(())
}

/// Markov orbit of a cocycle spec, two-sided when the spec is perturbed.
pub struct SpecOrbit<'a> {
    spec: &'a CocycleSpec,
    rng: ChaCha8Rng,
    rows: Vec<WeightedIndex<f64>>,
    /// x_{n−K}, …, x_{n+K}.
    window: VecDeque<Symbol>,
    reach: usize,
    log_dets: Vec<f64>,
}

impl<'a> SpecOrbit<'a> {
    pub fn new(spec: &'a CocycleSpec, source: RandomSource) -> Result<Self> {
        let mu = spec.measure();
        let rows = (0..mu.size())
            .map(|i| WeightedIndex::new(mu.transition()[i].iter().copied()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidMeasure(e.to_string()))?;
        let start = WeightedIndex::new(mu.stationary().iter().copied())
            .map_err(|e| Error::InvalidMeasure(e.to_string()))?;
        let mut rng = source.rng();
        let reach = if spec.is_locally_constant() {
            0
        } else {
            PERTURBATION_TERMS
        };
        let mut window = VecDeque::with_capacity(2 * reach + 1);
        window.push_back(start.sample(&mut rng) as Symbol);
        while window.len() < 2 * reach + 1 {
            let last = *window.back().expect("nonempty") as usize;
            window.push_back(rows[last].sample(&mut rng) as Symbol);
        }
        let log_dets = spec
            .matrices()
            .iter()
            .map(|m| m.clone().determinant().norm().ln())
            .collect();
        Ok(Self {
            spec,
            rng,
            rows,
            window,
            reach,
            log_dets,
        })
    }

    pub fn current(&self) -> Symbol {
        self.window[self.reach]
    }
}

impl CocycleOrbit for SpecOrbit<'_> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn initial_frame(&self) -> CMatrix {
        CMatrix::identity(self.dim(), self.dim())
    }

    fn advance(&mut self, frame: &mut CMatrix, _logs: &mut [f64]) -> Result<f64> {
        let log_det = if self.reach == 0 {
            let s = self.current() as usize;
            *frame = &self.spec.matrices()[s] * &*frame;
            self.log_dets[s]
        } else {
            let k = self.reach as i64;
            let w = &self.window;
            let m = self.spec.matrix_with(|n| w[(n + k) as usize]);
            let ld = m.clone().determinant().norm().ln();
            *frame = m * &*frame;
            ld
        };
        let last = *self.window.back().expect("nonempty") as usize;
        self.window.push_back(self.rows[last].sample(&mut self.rng) as Symbol);
        self.window.pop_front();
        Ok(log_det)
    }
}

/// Zorich orbit carrying the dual cocycle Z^{−1*}, optionally restricted
/// to H_π.
pub struct ZorichOrbit {
    pair: PermutationPair,
    lambda: SimplexPoint,
    restricted: bool,
    cap: u64,
    steps: u64,
    record: Option<Vec<(usize, Vec<(usize, u64)>)>>,
    /// Orthogonal projectors onto the range of Ω, per pair.
    projectors: HashMap<PermutationPair, Option<CMatrix>>,
}

impl ZorichOrbit {
    pub fn new(pair: PermutationPair, lambda: SimplexPoint, restricted: bool, cap: u64) -> Self {
        Self {
            pair,
            lambda,
            restricted,
            cap,
            steps: 0,
            record: None,
            projectors: HashMap::new(),
        }
    }

    /// Uniform float starting point drawn from `source`.
    pub fn random(pair: PermutationPair, source: RandomSource, restricted: bool, cap: u64) -> Self {
        let lambda = SimplexPoint::random_float(&mut source.rng(), pair.d());
        Self::new(pair, lambda, restricted, cap)
    }

    /// Keeps (winner, counts) of every step for a later replay.
    pub fn recording(mut self) -> Self {
        self.record = Some(Vec::new());
        self
    }

    pub fn take_record(&mut self) -> Vec<(usize, Vec<(usize, u64)>)> {
        self.record.take().unwrap_or_default()
    }

    pub fn pair(&self) -> &PermutationPair {
        &self.pair
    }

    /// None when Ω has full rank.
    fn range_projector(&mut self) -> Option<&CMatrix> {
        self.projectors
            .entry(self.pair.clone())
            .or_insert_with_key(|pair| {
                let b = omega_matrix(pair).range_basis_f64();
                let d = pair.d();
                (b.ncols() < d).then(|| {
                    let m = CMatrix::from_fn(d, b.ncols(), |i, j| c(b[(i, j)]));
                    let q = orthonormalize(&m, 1e-12).expect("range basis has full rank");
                    &q * q.adjoint()
                })
            })
            .as_ref()
    }

    pub fn next_step(&mut self) -> Result<ZorichStep> {
        let z = zorich_step(&self.pair, &self.lambda, self.cap).map_err(|e| match e {
            Error::RauzyTie { .. } => Error::Precondition(format!(
                "Rauzy tie after {} Zorich steps: {e}",
                self.steps
            )),
            other => other,
        })?;
        self.pair = z.end_pair.clone();
        self.lambda = z.end_lambda.clone();
        self.steps += 1;
        if let Some(r) = self.record.as_mut() {
            r.push((z.winner, z.counts.clone()));
        }
        Ok(z)
    }
}

impl CocycleOrbit for ZorichOrbit {
    fn dim(&self) -> usize {
        self.pair.d()
    }

    fn initial_frame(&self) -> CMatrix {
        let d = self.dim();
        if self.restricted {
            let b = omega_matrix(&self.pair).range_basis_f64();
            let m = CMatrix::from_fn(d, b.ncols(), |i, j| c(b[(i, j)]));
            orthonormalize(&m, 1e-12).expect("range basis has full rank")
        } else {
            CMatrix::identity(d, d)
        }
    }

    fn advance(&mut self, frame: &mut CMatrix, logs: &mut [f64]) -> Result<f64> {
        let z = self.next_step()?;
        let largest = z.counts.iter().map(|c| c.1).max().unwrap_or(0);
        let w = z.winner - 1;
        apply_chunked(frame, logs, largest, self.steps, |f, scale| {
            for &(s, n) in &z.counts {
                let k = c(n as f64 * scale);
                for j in 0..f.ncols() {
                    let add = f[(w, j)] * k;
                    f[(s - 1, j)] += add;
                }
            }
        })?;
        // rounding leaks into the complement of the range, where the
        // growth rate is larger than at the bottom of the restricted spectrum
        if self.restricted {
            if let Some(p) = self.range_projector() {
                *frame = p * &*frame;
            }
        }
        Ok(0.0)
    }
}

/// Recorded Zorich steps played backwards with Z⁻¹: the adjoint cocycle
/// over the inverse map along the same stationary segment.
pub struct ReplayOrbit {
    d: usize,
    steps: Vec<(usize, Vec<(usize, u64)>)>,
}

impl ReplayOrbit {
    pub fn new(d: usize, steps: Vec<(usize, Vec<(usize, u64)>)>) -> Self {
        Self { d, steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl CocycleOrbit for ReplayOrbit {
    fn dim(&self) -> usize {
        self.d
    }

    fn initial_frame(&self) -> CMatrix {
        CMatrix::identity(self.d, self.d)
    }

    fn advance(&mut self, frame: &mut CMatrix, logs: &mut [f64]) -> Result<f64> {
        let (winner, counts) = self
            .steps
            .pop()
            .ok_or_else(|| Error::Precondition("replayed orbit exhausted".into()))?;
        let w = winner - 1;
        let largest = counts.iter().map(|c| c.1).max().unwrap_or(0);
        apply_chunked(frame, logs, largest, self.steps.len() as u64, |f, scale| {
            for j in 0..f.ncols() {
                let mut add = C64::default();
                for &(s, n) in &counts {
                    add += f[(s - 1, j)] * c(n as f64 * scale);
                }
                f[(w, j)] += add;
            }
        })?;
        Ok(0.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimatorConfig {
    /// Steps used for the estimate, after warmup.
    pub iterations: u64,
    pub renorm_period: u64,
    pub batches: usize,
    pub warmup: u64,
}

impl EstimatorConfig {
    pub fn new(iterations: u64) -> Self {
        Self {
            iterations,
            renorm_period: 10,
            batches: MIN_BATCHES,
            warmup: iterations / 10,
        }
    }

    pub fn with_renorm(mut self, period: u64) -> Self {
        self.renorm_period = period;
        self
    }

    pub fn with_warmup(mut self, warmup: u64) -> Self {
        self.warmup = warmup;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.iterations < 1000 {
            return Err(Error::Precondition("at least 1000 iterations are needed".into()));
        }
        if self.batches < MIN_BATCHES {
            return Err(Error::Precondition(format!("at least {MIN_BATCHES} batches are needed")));
        }
        if self.renorm_period == 0 {
            return Err(Error::Precondition("renormalization period must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumEstimate {
    /// Non-increasing.
    pub exponents: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub iterations: u64,
    pub renorm_period: u64,
    /// Dimension of the tracked subspace when it is a proper one.
    pub restricted_dim: Option<usize>,
    /// Per-batch rates in the order of `exponents`.
    pub batch_rates: Vec<Vec<f64>>,
    /// Birkhoff average of log|det| and its standard error.
    pub log_det_rate: f64,
    pub log_det_se: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

impl SpectrumEstimate {
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// a·λ_i + b·λ_j with its batch-means standard error (0-based indices).
    pub fn combination(&self, i: usize, a: f64, j: usize, b: f64) -> (f64, f64) {
        let xs: Vec<f64> = self.batch_rates.iter().map(|r| a * r[i] + b * r[j]).collect();
        let (_, se) = mean_se(&xs);
        (a * self.exponents[i] + b * self.exponents[j], se)
    }

    /// λ_i − λ_{i+1} (0-based).
    pub fn gap(&self, i: usize) -> (f64, f64) {
        self.combination(i, 1.0, i + 1, -1.0)
    }

    /// Whether λ_i + λ_{k+1−i} vanishes within `sigmas` standard errors
    /// (plus `abs_tol`) for every i.
    pub fn is_symmetric(&self, sigmas: f64, abs_tol: f64) -> bool {
        let k = self.len();
        (0..k).all(|i| {
            let (v, se) = self.combination(i, 1.0, k - 1 - i, 1.0);
            v.abs() <= sigmas * se + abs_tol
        })
    }

    pub fn to_json(&self) -> Value {
        let gaps: Vec<Value> = (0..self.len().saturating_sub(1))
            .map(|i| {
                let (g, se) = self.gap(i);
                json!({ "value": g, "se": se })
            })
            .collect();
        json!({
            "exponents": self.exponents,
            "se": self.standard_errors,
            "gaps": gaps,
            "symmetric": self.is_symmetric(3.0, 1e-9),
            "iterations": self.iterations,
            "renorm_period": self.renorm_period,
            "restricted_dim": self.restricted_dim,
            "log_det_rate": self.log_det_rate,
        })
    }

    /// CSV rows of per-batch estimates.
    pub fn batches_csv(&self) -> String {
        let mut out = String::from("batch");
        for i in 1..=self.len() {
            out.push_str(&format!(",lambda_{i}"));
        }
        out.push('\n');
        for (b, row) in self.batch_rates.iter().enumerate() {
            out.push_str(&b.to_string());
            for x in row {
                out.push_str(&format!(",{x:.17e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// QR sweep shared by the estimators. Calls `on_renorm(step, logs)` after
/// every re-orthonormalization with the cumulative log|R_ii| since warmup.
struct Sweep {
    batch_sums: Vec<Vec<f64>>,
    batch_log_det: Vec<f64>,
}

fn sweep(
    orbit: &mut dyn CocycleOrbit,
    cfg: &EstimatorConfig,
    mut on_renorm: impl FnMut(u64, &[f64]),
) -> Result<Sweep> {
    cfg.validate()?;
    let mut frame = orbit.initial_frame();
    let k = frame.ncols();
    let total = cfg.warmup + cfg.iterations;
    let batch_len = cfg.iterations / cfg.batches as u64;
    let mut batch_sums = vec![vec![0.0; k]; cfg.batches];
    let mut batch_log_det = vec![0.0; cfg.batches];
    let mut cumulative = vec![0.0; k];
    let mut since = 0u64;
    let mut logs = vec![0.0; k];
    for step in 0..total {
        logs.iter_mut().for_each(|l| *l = 0.0);
        let ld = orbit.advance(&mut frame, &mut logs)?;
        since += 1;
        let measured = step >= cfg.warmup;
        let t = step + 1 - cfg.warmup.min(step + 1);
        let batch = if measured {
            Some((((step - cfg.warmup) / batch_len.max(1)) as usize).min(cfg.batches - 1))
        } else {
            None
        };
        let boundary = step + 1 == cfg.warmup
            || (measured && batch_len > 0 && (step + 1 - cfg.warmup) % batch_len == 0)
            || step + 1 == total;
        let big = frame.iter().any(|z| z.norm() > FRAME_GROWTH_GUARD);
        let renorm = since >= cfg.renorm_period || boundary || big;
        if renorm {
            if frame.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Overflow { step: step as usize });
            }
            if !reorthonormalize(&mut frame, &mut logs) {
                return Err(Error::DegenerateFrame { step: step as usize });
            }
            since = 0;
        }
        if let Some(b) = batch {
            batch_log_det[b] += ld;
            for i in 0..k {
                batch_sums[b][i] += logs[i];
                cumulative[i] += logs[i];
            }
            if renorm {
                on_renorm(t, &cumulative);
            }
        }
    }
    Ok(Sweep {
        batch_sums,
        batch_log_det,
    })
}

fn batch_lengths(cfg: &EstimatorConfig) -> Vec<f64> {
    let batch_len = cfg.iterations / cfg.batches as u64;
    (0..cfg.batches)
        .map(|b| {
            if b + 1 == cfg.batches {
                (cfg.iterations - batch_len * (cfg.batches as u64 - 1)) as f64
            } else {
                batch_len as f64
            }
        })
        .collect()
}

pub fn estimate_spectrum(orbit: &mut dyn CocycleOrbit, cfg: &EstimatorConfig) -> Result<SpectrumEstimate> {
    let d = orbit.dim();
    let s = sweep(orbit, cfg, |_, _| {})?;
    let lens = batch_lengths(cfg);
    let k = s.batch_sums[0].len();
    let rates: Vec<Vec<f64>> = s
        .batch_sums
        .iter()
        .zip(&lens)
        .map(|(row, &n)| row.iter().map(|x| x / n).collect())
        .collect();
    let mut order: Vec<(usize, f64, f64)> = (0..k)
        .map(|i| {
            let col: Vec<f64> = rates.iter().map(|r| r[i]).collect();
            let (m, se) = mean_se(&col);
            (i, m, se)
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let batch_rates = rates
        .iter()
        .map(|r| order.iter().map(|o| r[o.0]).collect())
        .collect();
    let ld: Vec<f64> = s.batch_log_det.iter().zip(&lens).map(|(x, n)| x / n).collect();
    let (log_det_rate, log_det_se) = mean_se(&ld);
    Ok(SpectrumEstimate {
        exponents: order.iter().map(|o| o.1).collect(),
        standard_errors: order.iter().map(|o| o.2).collect(),
        iterations: cfg.iterations,
        renorm_period: cfg.renorm_period,
        restricted_dim: (k < d).then_some(k),
        batch_rates,
        log_det_rate,
        log_det_se,
    })
}

/// Runs one estimate per stream in parallel; results come back in stream
/// order.
pub fn estimate_streams<O, F>(streams: &[RandomSource], cfg: &EstimatorConfig, make: F) -> Result<Vec<SpectrumEstimate>>
where
    O: CocycleOrbit,
    F: Fn(RandomSource) -> Result<O> + Sync,
{
    streams
        .par_iter()
        .map(|&s| {
            let mut orbit = make(s)?;
            estimate_spectrum(&mut orbit, cfg)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GapDiagnostic {
    /// 1-based.
    pub ell: usize,
    pub d_u: usize,
    pub d_s: usize,
    /// Least-squares growth rate of log Δⁿ over the second half of the run.
    pub slope: f64,
    pub slope_se: f64,
    /// d_s/(d_u+d_s)·(λ_u − λ_s) from the spectrum estimate.
    pub predicted: f64,
    pub predicted_se: f64,
    /// Whether the spectrum shows λ_ℓ − λ_{ℓ+1} above two standard errors.
    pub gap_candidate: bool,
    pub final_log_delta: f64,
    pub series: Vec<(u64, f64)>,
}

impl GapDiagnostic {
    /// |slope − predicted| in units of the combined standard error.
    pub fn discrepancy_sigmas(&self) -> f64 {
        let se = self.slope_se.hypot(self.predicted_se);
        let diff = (self.slope - self.predicted).abs();
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / se
        }
    }
}

/// Least-squares slope of y against x.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

/// log Δⁿ from the flag of evolved frames: ξ^u is spanned by frame columns
/// ℓ−d_u+1..ℓ and W adds columns ℓ+1..ℓ+d_s.
pub fn gap_diagnostic(
    orbit: &mut dyn CocycleOrbit,
    spectrum: &SpectrumEstimate,
    ell: usize,
    d_u: usize,
    d_s: usize,
    cfg: &EstimatorConfig,
) -> Result<GapDiagnostic> {
    let k = orbit.initial_frame().ncols();
    if ell == 0 || d_u == 0 || d_s == 0 || ell < d_u || ell + d_s > k || spectrum.len() != k {
        return Err(Error::DegreeOutOfRange(format!(
            "ell = {ell}, d_u = {d_u}, d_s = {d_s} for {k} tracked directions"
        )));
    }
    let lo = ell - d_u;
    let log_delta = |l: &[f64]| {
        let upto = |m: usize| l[..m].iter().sum::<f64>();
        (upto(ell) - upto(lo)) / d_u as f64 - (upto(ell + d_s) - upto(lo)) / (d_u + d_s) as f64
    };
    let mut series = Vec::new();
    sweep(orbit, cfg, |t, l| series.push((t, log_delta(l))))?;
    let half: Vec<(f64, f64)> = series[series.len() / 2..]
        .iter()
        .map(|&(t, v)| (t as f64, v))
        .collect();
    let slope = if half.len() >= 2 { ls_slope(&half) } else { f64::NAN };

    let batch_len = (cfg.iterations / cfg.batches as u64).max(1);
    let mut rates = Vec::with_capacity(cfg.batches);
    let mut prev = (0u64, 0.0);
    for &(t, v) in &series {
        if t % batch_len == 0 || t == cfg.iterations {
            if t > prev.0 {
                rates.push((v - prev.1) / (t - prev.0) as f64);
            }
            prev = (t, v);
        }
    }
    let (_, slope_se) = mean_se(&rates);

    let w = d_s as f64 / (d_u + d_s) as f64;
    let (g, g_se) = spectrum.gap(ell - 1);
    Ok(GapDiagnostic {
        ell,
        d_u,
        d_s,
        slope,
        slope_se,
        predicted: w * g,
        predicted_se: w * g_se,
        gap_candidate: g > 2.0 * g_se,
        final_log_delta: series.last().map_or(0.0, |s| s.1),
        series,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InducingReport {
    pub base: SpectrumEstimate,
    pub induced: SpectrumEstimate,
    pub base_mass: f64,
    /// Base exponents divided by the base mass.
    pub expected: Vec<f64>,
    /// (induced − expected)/combined standard error, per index.
    pub z_scores: Vec<f64>,
    pub rescale_ok: bool,
    /// n / (number of visits to the base cylinder) along a base orbit.
    pub mean_return_time: f64,
    pub kac: f64,
    pub kac_ok: bool,
    /// Standard errors too large relative to the exponents to decide.
    pub inconclusive: bool,
}

/// Fraction of the combined error above which the comparison is reported
/// as inconclusive.
pub const INDUCING_MAX_REL_SE: f64 = 0.1;

pub fn verify_inducing_rescale(
    base_spec: &CocycleSpec,
    induced: &CocycleSpec,
    system: &InducedSystem,
    cfg: &EstimatorConfig,
    source: RandomSource,
) -> Result<InducingReport> {
    let base = estimate_spectrum(&mut SpecOrbit::new(base_spec, source.substream(0))?, cfg)?;
    let ind = estimate_spectrum(&mut SpecOrbit::new(induced, source.substream(1))?, cfg)?;
    let mass = system.base_mass;
    let expected: Vec<f64> = base.exponents.iter().map(|x| x / mass).collect();
    let mut z_scores = Vec::new();
    let mut inconclusive = false;
    for i in 0..expected.len() {
        let se = (base.standard_errors[i] / mass).hypot(ind.standard_errors[i]);
        let diff = ind.exponents[i] - expected[i];
        z_scores.push(if se > 0.0 { diff / se } else if diff.abs() < 1e-12 { 0.0 } else { f64::INFINITY });
        if se > INDUCING_MAX_REL_SE * expected[i].abs().max(1.0) {
            inconclusive = true;
        }
    }
    let rescale_ok = !inconclusive && z_scores.iter().all(|z| z.abs() <= 3.0);
    let mean_return_time = birkhoff_return_time(base_spec.measure(), &system.base, cfg, source.substream(2))?;
    let kac = 1.0 / mass;
    Ok(InducingReport {
        base,
        induced: ind,
        base_mass: mass,
        expected,
        z_scores,
        rescale_ok,
        mean_return_time,
        kac,
        kac_ok: (mean_return_time / kac - 1.0).abs() <= 0.05,
        inconclusive,
    })
}

/// Orbit length divided by the number of times the orbit starts the
/// cylinder word.
pub fn birkhoff_return_time(
    mu: &MarkovMeasure,
    word: &[Symbol],
    cfg: &EstimatorConfig,
    source: RandomSource,
) -> Result<f64> {
    let spec = CocycleSpec::new(
        crate::cocycle::MatrixFamily::Float(vec![CMatrix::identity(1, 1); mu.size()]),
        mu.clone(),
    )?;
    let mut orbit = SpecOrbit::new(&spec, source)?;
    let n = cfg.iterations.max(1) as usize;
    let mut seq: VecDeque<Symbol> = VecDeque::with_capacity(word.len());
    let mut visits = 0usize;
    let mut scratch = CMatrix::identity(1, 1);
    for _ in 0..n + word.len() - 1 {
        seq.push_back(orbit.current());
        if seq.len() > word.len() {
            seq.pop_front();
        }
        if seq.len() == word.len() && seq.iter().eq(word.iter()) {
            visits += 1;
        }
        orbit.advance(&mut scratch, &mut [])?;
    }
    if visits == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(n as f64 / visits as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct AdjointReport {
    pub forward: SpectrumEstimate,
    pub adjoint: SpectrumEstimate,
    pub z_scores: Vec<f64>,
    pub ok: bool,
}

fn compare(forward: SpectrumEstimate, adjoint: SpectrumEstimate, abs_tol: f64) -> AdjointReport {
    let z_scores: Vec<f64> = (0..forward.len())
        .map(|i| {
            let se = forward.standard_errors[i].hypot(adjoint.standard_errors[i]);
            let diff = (forward.exponents[i] - adjoint.exponents[i]).abs();
            if diff <= abs_tol {
                0.0
            } else if se > 0.0 {
                diff / se
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let ok = z_scores.iter().all(|z| *z <= 3.0);
    AdjointReport {
        forward,
        adjoint,
        z_scores,
        ok,
    }
}

/// Spectrum of the spec against that of its adjoint over the reversed
/// chain, on independent streams.
pub fn adjoint_spectrum_check(spec: &CocycleSpec, cfg: &EstimatorConfig, source: RandomSource) -> Result<AdjointReport> {
    let adj = spec.adjoint();
    let forward = estimate_spectrum(&mut SpecOrbit::new(spec, source.substream(0))?, cfg)?;
    let adjoint = estimate_spectrum(&mut SpecOrbit::new(&adj, source.substream(1))?, cfg)?;
    Ok(compare(forward, adjoint, 1e-9))
}

/// Zorich version: the forward dual cocycle on one orbit, and Z⁻¹ replayed
/// backwards along an independent recorded orbit.
pub fn zorich_adjoint_check(
    pair: &PermutationPair,
    cfg: &EstimatorConfig,
    source: RandomSource,
    cap: u64,
) -> Result<AdjointReport> {
    let mut fwd_orbit = ZorichOrbit::random(pair.clone(), source.substream(0), false, cap);
    let forward = estimate_spectrum(&mut fwd_orbit, cfg)?;
    let mut rec = ZorichOrbit::random(pair.clone(), source.substream(1), false, cap).recording();
    // the recorded orbit is discarded up to the warmup before replay
    for _ in 0..cfg.warmup {
        rec.next_step()?;
    }
    rec.take_record();
    let mut rec = rec.recording();
    for _ in 0..cfg.warmup + cfg.iterations {
        rec.next_step()?;
    }
    let mut replay = ReplayOrbit::new(pair.d(), rec.take_record());
    let adjoint = estimate_spectrum(&mut replay, cfg)?;
    Ok(compare(forward, adjoint, 1e-9))
}

/// Log-growth rates of the singular values of a matrix product.
pub fn product_log_singular_values(product: &DMatrix<f64>) -> Vec<f64> {
    real_singular_values(product).iter().map(|x| x.ln()).collect()
}
