//! Words, cylinders, Markov measures, backward averages, oscillation of
//! potentials and first-return inducing.

use serde::Serialize;

use crate::cocycle::{CocycleSpec, MatrixFamily};
use crate::error::{Error, Result};
use crate::exact::QMatrix;
use crate::numeric::CMatrix;

pub type Symbol = u32;

/// Enumeration cap above which oscillation falls back to declared bounds.
pub const OSCILLATION_ENUMERATION_CAP: usize = 1_000_000;

/// Mass left unaccounted by a truncation that triggers a warning.
pub const TRUNCATION_WARNING: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Alphabet {
    Finite(usize),
    /// Countable alphabet, enumerated only up to `depth` symbols.
    Truncated { depth: usize },
}

impl Alphabet {
    pub fn enumerated(&self) -> usize {
        match *self {
            Alphabet::Finite(n) => n,
            Alphabet::Truncated { depth } => depth,
        }
    }

    pub fn is_truncated(&self) -> bool {
        matches!(self, Alphabet::Truncated { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    /// Coordinates n ≥ 0.
    Unstable,
    /// Coordinates n < 0, stored in time order ending at −1.
    Stable,
    Window,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Word {
    symbols: Vec<Symbol>,
    side: Side,
}

impl Word {
    pub fn new(symbols: Vec<Symbol>, side: Side, alphabet: usize) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidSpec("empty word".into()));
        }
        if let Some(&s) = symbols.iter().find(|&&s| s as usize >= alphabet) {
            return Err(Error::SymbolOutOfRange {
                symbol: s,
                size: alphabet,
            });
        }
        Ok(Self { symbols, side })
    }

    pub fn unstable(symbols: Vec<Symbol>, alphabet: usize) -> Result<Self> {
        Self::new(symbols, Side::Unstable, alphabet)
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Cylinder mass with a flag for words crossing a forbidden transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderMass {
    pub mass: f64,
    pub null: bool,
}

/// Stationary Markov chain on a finite alphabet.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarkovMeasure {
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
}

impl MarkovMeasure {
    pub fn new(transition: Vec<Vec<f64>>, stationary: Vec<f64>) -> Result<Self> {
        let n = stationary.len();
        if n == 0 || transition.len() != n || transition.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMeasure("transition must be square and match stationary".into()));
        }
        let all = transition.iter().flatten().chain(&stationary);
        if all.clone().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidMeasure("negative or non-finite probability".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidMeasure(format!("row {i} sums to {s}")));
            }
        }
        if (stationary.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure("stationary vector does not sum to 1".into()));
        }
        for j in 0..n {
            let s: f64 = (0..n).map(|i| stationary[i] * transition[i][j]).sum();
            if (s - stationary[j]).abs() > 1e-10 {
                return Err(Error::InvalidMeasure(format!(
                    "stationary vector not invariant at symbol {j}"
                )));
            }
        }
        if stationary.iter().any(|&p| p == 0.0) {
            return Err(Error::InvalidMeasure("stationary vector has a null symbol".into()));
        }
        Ok(Self {
            transition,
            stationary,
        })
    }

    /// Stationary vector found by power iteration on an irreducible,
    /// aperiodic transition matrix.
    pub fn from_transition(transition: Vec<Vec<f64>>) -> Result<Self> {
        let n = transition.len();
        if n == 0 {
            return Err(Error::InvalidMeasure("empty alphabet".into()));
        }
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut next = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    // lazy chain: same stationary vector, no periodicity
                    next[j] += 0.5 * pi[i] * transition[i].get(j).copied().unwrap_or(0.0);
                }
                next[i] += 0.5 * pi[i];
            }
            let s: f64 = next.iter().sum();
            next.iter_mut().for_each(|p| *p /= s);
            let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if delta < 1e-16 {
                break;
            }
        }
        Self::new(transition, pi)
    }

    pub fn bernoulli(p: Vec<f64>) -> Result<Self> {
        let rows = vec![p.clone(); p.len()];
        Self::new(rows, p)
    }

    pub fn uniform(n: usize) -> Self {
        Self::bernoulli(vec![1.0 / n as f64; n]).expect("uniform weights are valid")
    }

    pub fn size(&self) -> usize {
        self.stationary.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn p(&self, i: Symbol, j: Symbol) -> f64 {
        self.transition[i as usize][j as usize]
    }

    pub fn is_bernoulli(&self) -> bool {
        self.transition
            .iter()
            .all(|row| row.iter().zip(&self.stationary).all(|(a, b)| (a - b).abs() < 1e-15))
    }

    /// Time reversal: P*_{ij} = π_j P_{ji} / π_i.
    pub fn reversed(&self) -> Self {
        let n = self.size();
        let pi = &self.stationary;
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = pi[j] * self.transition[j][i] / pi[i];
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        Self {
            transition: rows,
            stationary: pi.clone(),
        }
    }

    pub fn cylinder_measure(&self, w: &[Symbol]) -> Result<CylinderMass> {
        let n = self.size();
        if let Some(&s) = w.iter().find(|&&s| s as usize >= n) {
            return Err(Error::SymbolOutOfRange { symbol: s, size: n });
        }
        let Some(&first) = w.first() else {
            return Ok(CylinderMass {
                mass: 1.0,
                null: false,
            });
        };
        let mut mass = self.stationary[first as usize];
        for pair in w.windows(2) {
            mass *= self.p(pair[0], pair[1]);
        }
        Ok(CylinderMass {
            mass,
            null: mass == 0.0,
        })
    }

    /// Bound K on J f^k_I(x) / J f^k_I(y) over anchors x, y and branches I
    /// admissible for both. Independent of k for Markov chains, since the
    /// branch weight only sees the first anchor symbol.
    pub fn distortion_bound(&self) -> f64 {
        let n = self.size();
        let pi = &self.stationary;
        let mut k: f64 = 1.0;
        for j in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let (pa, pb) = (self.transition[j][a], self.transition[j][b]);
                    if pa > 0.0 && pb > 0.0 {
                        k = k.max((pa / pi[a]) / (pb / pi[b]));
                    }
                }
            }
        }
        k
    }
}

pub fn cylinder_measure(mu: &MarkovMeasure, w: &[Symbol]) -> Result<CylinderMass> {
    mu.cylinder_measure(w)
}

#[derive(Clone, Debug, Serialize)]
pub struct BackwardBranch {
    /// Preimage prefix (x_{−k}, …, x_{−1}) in time order.
    pub word: Vec<Symbol>,
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BackwardAverage {
    pub branches: Vec<BackwardBranch>,
    pub total: f64,
    /// Mass not enumerated because of the truncation.
    pub unaccounted: f64,
    pub warning: bool,
}

/// The measure μ_{k,x}: preimages of x under f^k weighted by 1/J f^k,
/// i.e. the conditional law of the k-step past given the anchor symbol.
pub fn backward_average(
    mu: &MarkovMeasure,
    x_prefix: &[Symbol],
    k: usize,
    truncation: usize,
) -> Result<BackwardAverage> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let &anchor = x_prefix
        .first()
        .ok_or_else(|| Error::Precondition("empty anchor word".into()))?;
    let n = mu.size();
    if anchor as usize >= n {
        return Err(Error::SymbolOutOfRange {
            symbol: anchor,
            size: n,
        });
    }
    let reversed = mu.reversed();
    let limit = truncation.min(n);
    let mut branches = Vec::new();
    // Depth-first over the reversed chain; words are built backwards.
    let mut stack: Vec<(Vec<Symbol>, f64)> = vec![(Vec::new(), 1.0)];
    while let Some((rev, w)) = stack.pop() {
        if rev.len() == k {
            let mut word = rev;
            word.reverse();
            branches.push(BackwardBranch { word, weight: w });
            continue;
        }
        let cur = *rev.last().unwrap_or(&anchor);
        for j in (0..limit as Symbol).rev() {
            let p = reversed.p(cur, j);
            if p > 0.0 {
                let mut next = rev.clone();
                next.push(j);
                stack.push((next, w * p));
            }
        }
    }
    branches.sort_by(|a, b| a.word.cmp(&b.word));
    let total: f64 = branches.iter().map(|b| b.weight).sum();
    let unaccounted = (1.0 - total).max(0.0);
    Ok(BackwardAverage {
        branches,
        total,
        unaccounted,
        warning: unaccounted > TRUNCATION_WARNING,
    })
}

/// Real function on one-sided sequences, known through interval bounds on
/// cylinders.
pub trait Potential {
    fn alphabet_size(&self) -> usize;

    /// Interval containing ψ(x) for every x starting with `prefix`; `None`
    /// if the potential refuses this depth.
    fn bounds(&self, prefix: &[Symbol]) -> Option<(f64, f64)>;

    /// Declared bound on osc_k, used when enumeration is too large.
    fn declared_oscillation(&self, _k: usize) -> Option<f64> {
        None
    }
}

/// ψ depending only on the first `depth` coordinates.
pub struct LocallyConstantPotential<F: Fn(&[Symbol]) -> f64> {
    pub alphabet: usize,
    pub depth: usize,
    pub f: F,
}

impl<F: Fn(&[Symbol]) -> f64> Potential for LocallyConstantPotential<F> {
    fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    fn bounds(&self, prefix: &[Symbol]) -> Option<(f64, f64)> {
        if prefix.len() >= self.depth {
            let v = (self.f)(&prefix[..self.depth]);
            return Some((v, v));
        }
        // extend by every continuation up to the declared depth
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut stack = vec![prefix.to_vec()];
        while let Some(w) = stack.pop() {
            if w.len() == self.depth {
                let v = (self.f)(&w);
                lo = lo.min(v);
                hi = hi.max(v);
                continue;
            }
            for s in 0..self.alphabet as Symbol {
                let mut next = w.clone();
                next.push(s);
                stack.push(next);
            }
        }
        Some((lo, hi))
    }

    fn declared_oscillation(&self, k: usize) -> Option<f64> {
        (k >= self.depth).then_some(0.0)
    }
}

/// ψ(x) = Σ_{n≥0} ratio^n · values[x_n].
#[derive(Clone, Debug)]
pub struct GeometricPotential {
    pub values: Vec<f64>,
    pub ratio: f64,
    /// Deepest prefix the potential agrees to evaluate.
    pub max_depth: usize,
}

impl Potential for GeometricPotential {
    fn alphabet_size(&self) -> usize {
        self.values.len()
    }

    fn bounds(&self, prefix: &[Symbol]) -> Option<(f64, f64)> {
        if prefix.len() > self.max_depth {
            return None;
        }
        let mut partial = 0.0;
        let mut w = 1.0;
        for &s in prefix {
            partial += w * self.values[s as usize];
            w *= self.ratio;
        }
        let tail = w / (1.0 - self.ratio);
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((partial + tail * lo, partial + tail * hi))
    }

    fn declared_oscillation(&self, k: usize) -> Option<f64> {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((hi - lo) * self.ratio.powi(k as i32) / (1.0 - self.ratio))
    }
}

/// log J f for a Markov measure: log(π_{x0} P_{x0 x1} / π_{x1}).
pub fn markov_log_jacobian(
    mu: &MarkovMeasure,
) -> LocallyConstantPotential<impl Fn(&[Symbol]) -> f64 + '_> {
    LocallyConstantPotential {
        alphabet: mu.size(),
        depth: 2,
        f: move |w: &[Symbol]| {
            let p = mu.stationary[w[0] as usize] * mu.p(w[0], w[1]) / mu.stationary[w[1] as usize];
            if p > 0.0 {
                p.ln()
            } else {
                0.0
            }
        },
    }
}

/// Upper bound on sup over depth-k cylinders of the oscillation of ψ.
pub fn oscillation(psi: &dyn Potential, k: usize, truncation: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let a = psi.alphabet_size().min(truncation).max(1);
    let count = (a as f64).powi(k as i32);
    if count > OSCILLATION_ENUMERATION_CAP as f64 {
        return psi
            .declared_oscillation(k)
            .ok_or(Error::PotentialDepth { depth: k });
    }
    let mut worst: f64 = 0.0;
    let mut word = vec![0 as Symbol; k];
    loop {
        let (lo, hi) = psi.bounds(&word).ok_or(Error::PotentialDepth { depth: k })?;
        worst = worst.max(hi - lo);
        // odometer increment
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(worst);
            }
            pos -= 1;
            word[pos] += 1;
            if (word[pos] as usize) < a {
                break;
            }
            word[pos] = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReturnWord {
    pub word: Vec<Symbol>,
    pub r: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InducedSystem {
    pub base: Vec<Symbol>,
    pub return_words: Vec<ReturnWord>,
    pub base_mass: f64,
    /// Fraction of the base cylinder covered by the enumerated words.
    pub captured_mass: f64,
    pub max_return_time: usize,
    /// True if enumeration stopped at the word cap before max_return_time.
    pub truncated: bool,
}

/// Words enumerated before `build_induced` gives up.
pub const INDUCED_WORD_CAP: usize = 2_000_000;

impl InducedSystem {
    /// Σ r·mass / Σ mass over the enumerated words.
    pub fn mean_return_time(&self) -> f64 {
        let total: f64 = self.return_words.iter().map(|w| w.mass).sum();
        self.return_words.iter().map(|w| w.r as f64 * w.mass).sum::<f64>() / total
    }

    pub fn kac_mean(&self) -> f64 {
        1.0 / self.base_mass
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Export<'a> {
            base: &'a [Symbol],
            return_words: &'a [ReturnWord],
            captured_mass: f64,
        }
        serde_json::to_value(Export {
            base: &self.base,
            return_words: &self.return_words,
            captured_mass: self.captured_mass,
        })
        .expect("plain data serializes")
    }
}

/// Enumerates first-return words to the cylinder of `base`: words that start
/// with `base`, contain it again starting at position r ≥ 1, and contain it
/// at no earlier position.
pub fn build_induced(mu: &MarkovMeasure, base: &[Symbol], max_return_time: usize) -> Result<InducedSystem> {
    let base_mass = mu.cylinder_measure(base)?.mass;
    if base.is_empty() || base_mass <= 0.0 {
        return Err(Error::ZeroMeasure);
    }
    let k = base.len();
    let n = mu.size() as Symbol;
    let mut out = Vec::new();
    let mut truncated = false;
    let mut visited = 0usize;
    // (word, mass) stack; lexicographic order via reversed pushes.
    let mut stack: Vec<(Vec<Symbol>, f64)> = vec![(base.to_vec(), base_mass)];
    while let Some((w, m)) = stack.pop() {
        visited += 1;
        if visited > INDUCED_WORD_CAP {
            truncated = true;
            break;
        }
        let r = w.len() - k;
        if r >= 1 && w[r..] == *base {
            out.push(ReturnWord { word: w, r, mass: m });
            continue;
        }
        if r + 1 > max_return_time {
            continue;
        }
        let last = *w.last().expect("nonempty");
        for s in (0..n).rev() {
            let p = mu.p(last, s);
            if p > 0.0 {
                let mut next = w.clone();
                next.push(s);
                stack.push((next, m * p));
            }
        }
    }
    out.sort_by(|a, b| a.r.cmp(&b.r).then_with(|| a.word.cmp(&b.word)));
    let captured_mass = out.iter().map(|w| w.mass).sum::<f64>() / base_mass;
    Ok(InducedSystem {
        base: base.to_vec(),
        return_words: out,
        base_mass,
        captured_mass,
        max_return_time,
        truncated,
    })
}

/// First-return cocycle: on return word J with return time r the matrix is
/// A_{J_{r−1}} ⋯ A_{J_0}. The induced measure is Bernoulli over return
/// words, renormalized over the enumerated ones.
pub fn induce_cocycle(spec: &CocycleSpec, ind: &InducedSystem) -> Result<CocycleSpec> {
    if !spec.is_locally_constant() {
        return Err(Error::DepthIncompatible(
            "only locally constant depth-one cocycles can be induced on cylinders".into(),
        ));
    }
    if ind.return_words.is_empty() {
        return Err(Error::DepthIncompatible("no return words enumerated".into()));
    }
    let total: f64 = ind.return_words.iter().map(|w| w.mass).sum();
    let weights: Vec<f64> = ind.return_words.iter().map(|w| w.mass / total).collect();
    // renormalize against rounding so the Bernoulli check passes
    let s: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / s).collect();
    let measure = MarkovMeasure::bernoulli(weights)?;
    let family = match spec.family() {
        MatrixFamily::Exact(ms) => MatrixFamily::Exact(
            ind.return_words
                .iter()
                .map(|rw| {
                    rw.word[..rw.r]
                        .iter()
                        .fold(QMatrix::identity(spec.dim()), |acc, &s| &ms[s as usize] * &acc)
                })
                .collect(),
        ),
        MatrixFamily::Float(ms) => MatrixFamily::Float(
            ind.return_words
                .iter()
                .map(|rw| {
                    rw.word[..rw.r]
                        .iter()
                        .fold(CMatrix::identity(spec.dim(), spec.dim()), |acc, &s| &ms[s as usize] * acc)
                })
                .collect(),
        ),
    };
    CocycleSpec::new(family, measure)
}
