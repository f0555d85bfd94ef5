//! Linear cocycles over a Markov shift: matrix families, symbolic points,
//! optional Hölder perturbations and the JSON spec format.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exact::{format_rational, parse_rational, QMatrix};
use crate::numeric::{c, operator_norm, CMatrix, C64};
use crate::shift_space::{MarkovMeasure, Symbol};

/// Number of perturbation terms kept on each side.
pub const PERTURBATION_TERMS: usize = 64;

pub const DEFAULT_METRIC_THETA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub enum MatrixFamily {
    Exact(Vec<QMatrix>),
    Float(Vec<CMatrix>),
}

impl MatrixFamily {
    pub fn len(&self) -> usize {
        match self {
            MatrixFamily::Exact(v) => v.len(),
            MatrixFamily::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_float(&self) -> Vec<CMatrix> {
        match self {
            MatrixFamily::Exact(v) => v.iter().map(QMatrix::to_complex).collect(),
            MatrixFamily::Float(v) => v.clone(),
        }
    }
}

/// Eventually periodic one-sided sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ray {
    pub prefix: Vec<Symbol>,
    pub period: Vec<Symbol>,
}

impl Ray {
    pub fn new(prefix: Vec<Symbol>, period: Vec<Symbol>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::InvalidSpec("ray needs a nonempty period".into()));
        }
        Ok(Self { prefix, period })
    }

    pub fn periodic(period: Vec<Symbol>) -> Result<Self> {
        Self::new(Vec::new(), period)
    }

    pub fn at(&self, n: usize) -> Symbol {
        if n < self.prefix.len() {
            self.prefix[n]
        } else {
            self.period[(n - self.prefix.len()) % self.period.len()]
        }
    }

    fn drop_front(&self, k: usize) -> Ray {
        if k <= self.prefix.len() {
            Ray {
                prefix: self.prefix[k..].to_vec(),
                period: self.period.clone(),
            }
        } else {
            let m = (k - self.prefix.len()) % self.period.len();
            let mut period = self.period.clone();
            period.rotate_left(m);
            Ray {
                prefix: Vec::new(),
                period,
            }
        }
    }

    /// Horizon after which two rays with these shapes agree forever if they
    /// agree up to it.
    fn horizon(&self, other: &Ray) -> usize {
        let lcm = num_integer::lcm(self.period.len(), other.period.len());
        self.prefix.len().max(other.prefix.len()) + lcm
    }

    pub fn agrees(&self, other: &Ray) -> bool {
        (0..self.horizon(other)).all(|n| self.at(n) == other.at(n))
    }

    /// First index where the rays differ.
    pub fn first_difference(&self, other: &Ray) -> Option<usize> {
        (0..self.horizon(other)).find(|&n| self.at(n) != other.at(n))
    }

    fn max_symbol(&self) -> Symbol {
        self.prefix.iter().chain(&self.period).copied().max().unwrap_or(0)
    }
}

/// Two-sided eventually periodic point: `future.at(n)` is x_n and
/// `past.at(n)` is x_{−n−1}.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymbolicPoint {
    pub past: Ray,
    pub future: Ray,
}

impl SymbolicPoint {
    pub fn new(past: Ray, future: Ray) -> Self {
        Self { past, future }
    }

    /// p_n = word[n mod q] for all integers n.
    pub fn periodic(word: &[Symbol]) -> Result<Self> {
        let mut rev = word.to_vec();
        rev.reverse();
        Ok(Self {
            past: Ray::periodic(rev)?,
            future: Ray::periodic(word.to_vec())?,
        })
    }

    pub fn at(&self, n: i64) -> Symbol {
        if n >= 0 {
            self.future.at(n as usize)
        } else {
            self.past.at((-n - 1) as usize)
        }
    }

    /// (x_{−n−1})_n: the time-reversed point.
    pub fn reversed(&self) -> Self {
        Self {
            past: self.future.clone(),
            future: self.past.clone(),
        }
    }

    /// σ^k(x)_n = x_{n+k}.
    pub fn shift(&self, k: i64) -> Self {
        if k < 0 {
            return self.reversed().shift(-k).reversed();
        }
        let k = k as usize;
        let mut past_prefix: Vec<Symbol> = (0..k).rev().map(|n| self.future.at(n)).collect();
        past_prefix.extend_from_slice(&self.past.prefix);
        Self {
            past: Ray {
                prefix: past_prefix,
                period: self.past.period.clone(),
            },
            future: self.future.drop_front(k),
        }
    }

    /// Same coordinates for n ≥ 0.
    pub fn same_future(&self, other: &Self) -> bool {
        self.future.agrees(&other.future)
    }

    /// Same coordinates for n < 0.
    pub fn same_past(&self, other: &Self) -> bool {
        self.past.agrees(&other.past)
    }

    /// Smallest |n| with x_n ≠ y_n, if any.
    pub fn disagreement_depth(&self, other: &Self) -> Option<usize> {
        let f = self.future.first_difference(&other.future);
        let p = self.past.first_difference(&other.past).map(|n| n + 1);
        match (f, p) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// θ^{first disagreement depth}.
    pub fn distance(&self, other: &Self, theta: f64) -> f64 {
        self.disagreement_depth(other)
            .map_or(0.0, |n| theta.powi(n as i32))
    }

    fn max_symbol(&self) -> Symbol {
        self.past.max_symbol().max(self.future.max_symbol())
    }
}

/// Â(x) = A_{x_0} + ε Σ_{k=1}^{K} θ^{kν} (w(x_{−k}) P + w(x_k) F).
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub epsilon: f64,
    pub nu: f64,
    pub past: CMatrix,
    pub future: CMatrix,
    pub weights: Vec<f64>,
}

impl Perturbation {
    /// Constant C with ‖Â(x) − Â(y)‖ ≤ C d(x, y)^ν.
    pub fn holder_constant(&self, theta: f64) -> f64 {
        let spread = self.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - self.weights.iter().copied().fold(f64::INFINITY, f64::min);
        let r = theta.powf(self.nu);
        self.epsilon.abs() * spread * (operator_norm(&self.past) + operator_norm(&self.future)) / (1.0 - r)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomoclinicSpec {
    /// Symbols z_0, …, z_{m−1} replacing the periodic orbit.
    pub insert: Vec<Symbol>,
    /// Multiple of the period with z_{l+n} = p_n for n ≥ 0.
    pub l: usize,
}

#[derive(Clone, Debug)]
pub struct CocycleSpec {
    family: MatrixFamily,
    float: Vec<CMatrix>,
    measure: MarkovMeasure,
    periodic: Option<Vec<Symbol>>,
    homoclinic: Option<HomoclinicSpec>,
    perturbation: Option<Perturbation>,
    metric_theta: f64,
}

impl CocycleSpec {
    pub fn new(family: MatrixFamily, measure: MarkovMeasure) -> Result<Self> {
        if family.is_empty() {
            return Err(Error::InvalidSpec("no matrices".into()));
        }
        if family.len() != measure.size() {
            return Err(Error::InvalidSpec(format!(
                "{} matrices for an alphabet of {} symbols",
                family.len(),
                measure.size()
            )));
        }
        let float = family.to_float();
        let d = float[0].nrows();
        for m in &float {
            if m.shape() != (d, d) {
                return Err(Error::DimensionMismatch("matrices must be square and equal-sized".into()));
            }
            if !crate::numeric::is_finite(m) {
                return Err(Error::NonFinite);
            }
        }
        Ok(Self {
            family,
            float,
            measure,
            periodic: None,
            homoclinic: None,
            perturbation: None,
            metric_theta: DEFAULT_METRIC_THETA,
        })
    }

    pub fn with_periodic(mut self, word: Vec<Symbol>) -> Result<Self> {
        self.check_symbols(&word)?;
        if word.is_empty() {
            return Err(Error::InvalidSpec("empty periodic word".into()));
        }
        self.periodic = Some(word);
        Ok(self)
    }

    /// `l` defaults to the smallest multiple of the period covering the
    /// insert.
    pub fn with_homoclinic(mut self, insert: Vec<Symbol>, l: Option<usize>) -> Result<Self> {
        let q = self
            .periodic
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("homoclinic point needs a periodic point".into()))?
            .len();
        self.check_symbols(&insert)?;
        let min_l = insert.len().div_ceil(q).max(1) * q;
        let l = l.unwrap_or(min_l);
        if l % q != 0 || l < insert.len() || l == 0 {
            return Err(Error::InvalidSpec(format!(
                "l = {l} must be a positive multiple of the period {q} covering the insert"
            )));
        }
        self.homoclinic = Some(HomoclinicSpec { insert, l });
        Ok(self)
    }

    pub fn with_perturbation(mut self, p: Perturbation) -> Result<Self> {
        let d = self.dim();
        if p.past.shape() != (d, d) || p.future.shape() != (d, d) {
            return Err(Error::DimensionMismatch("perturbation directions".into()));
        }
        if p.weights.len() != self.alphabet() {
            return Err(Error::InvalidSpec("one perturbation weight per symbol".into()));
        }
        if !(p.nu > 0.0 && p.nu <= 1.0) {
            return Err(Error::InvalidSpec("Hölder exponent must lie in (0, 1]".into()));
        }
        self.perturbation = Some(p);
        Ok(self)
    }

    pub fn with_metric_theta(mut self, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidSpec("metric theta must lie in (0, 1)".into()));
        }
        self.metric_theta = theta;
        Ok(self)
    }

    fn check_symbols(&self, w: &[Symbol]) -> Result<()> {
        match w.iter().find(|&&s| s as usize >= self.alphabet()) {
            Some(&s) => Err(Error::SymbolOutOfRange {
                symbol: s,
                size: self.alphabet(),
            }),
            None => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.float[0].nrows()
    }

    pub fn alphabet(&self) -> usize {
        self.float.len()
    }

    pub fn family(&self) -> &MatrixFamily {
        &self.family
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.float
    }

    pub fn exact_matrices(&self) -> Option<&[QMatrix]> {
        match &self.family {
            MatrixFamily::Exact(v) => Some(v),
            MatrixFamily::Float(_) => None,
        }
    }

    pub fn measure(&self) -> &MarkovMeasure {
        &self.measure
    }

    pub fn periodic_word(&self) -> Option<&[Symbol]> {
        self.periodic.as_deref()
    }

    pub fn homoclinic(&self) -> Option<&HomoclinicSpec> {
        self.homoclinic.as_ref()
    }

    pub fn perturbation(&self) -> Option<&Perturbation> {
        self.perturbation.as_ref()
    }

    pub fn metric_theta(&self) -> f64 {
        self.metric_theta
    }

    pub fn is_locally_constant(&self) -> bool {
        self.perturbation.as_ref().is_none_or(|p| p.epsilon == 0.0)
    }

    /// Locally constant with rational matrices.
    pub fn is_exact(&self) -> bool {
        self.is_locally_constant() && matches!(self.family, MatrixFamily::Exact(_))
    }

    pub fn holder_constant(&self) -> f64 {
        self.perturbation
            .as_ref()
            .map_or(0.0, |p| p.holder_constant(self.metric_theta))
    }

    pub fn matrix_at(&self, x: &SymbolicPoint) -> CMatrix {
        self.matrix_with(|n| x.at(n))
    }

    /// Â at the point whose n-th coordinate is `at(n)`; only |n| ≤
    /// `PERTURBATION_TERMS` is read.
    pub fn matrix_with(&self, at: impl Fn(i64) -> Symbol) -> CMatrix {
        let mut m = self.float[at(0) as usize].clone();
        if let Some(p) = self.perturbation.as_ref().filter(|p| p.epsilon != 0.0) {
            let r = self.metric_theta.powf(p.nu);
            let mut w = 1.0;
            let mut a = 0.0;
            let mut b = 0.0;
            for k in 1..=PERTURBATION_TERMS as i64 {
                w *= r;
                a += w * p.weights[at(-k) as usize];
                b += w * p.weights[at(k) as usize];
            }
            m += &p.past * c(p.epsilon * a) + &p.future * c(p.epsilon * b);
        }
        m
    }

    /// Â(x) − Â(y), summed over the coordinates where x and y differ so
    /// that small differences keep their relative precision.
    pub fn matrix_difference(&self, x: &SymbolicPoint, y: &SymbolicPoint) -> CMatrix {
        let d = self.dim();
        let (x0, y0) = (x.at(0) as usize, y.at(0) as usize);
        let mut m = if x0 == y0 {
            CMatrix::zeros(d, d)
        } else {
            &self.float[x0] - &self.float[y0]
        };
        if let Some(p) = self.perturbation.as_ref().filter(|p| p.epsilon != 0.0) {
            let r = self.metric_theta.powf(p.nu);
            let mut w = 1.0;
            let mut a = 0.0;
            let mut b = 0.0;
            for k in 1..=PERTURBATION_TERMS as i64 {
                w *= r;
                let (xp, yp) = (x.at(-k), y.at(-k));
                if xp != yp {
                    a += w * (p.weights[xp as usize] - p.weights[yp as usize]);
                }
                let (xf, yf) = (x.at(k), y.at(k));
                if xf != yf {
                    b += w * (p.weights[xf as usize] - p.weights[yf as usize]);
                }
            }
            m += &p.past * c(p.epsilon * a) + &p.future * c(p.epsilon * b);
        }
        m
    }

    /// Âⁿ(x) = Â(fⁿ⁻¹x) ⋯ Â(x).
    pub fn product_along(&self, x: &SymbolicPoint, n: usize) -> CMatrix {
        let d = self.dim();
        let mut acc = CMatrix::identity(d, d);
        let mut y = x.clone();
        for _ in 0..n {
            acc = self.matrix_at(&y) * acc;
            y = y.shift(1);
        }
        acc
    }

    /// A_{w_{n−1}} ⋯ A_{w_0} using the unperturbed matrices.
    pub fn word_product(&self, w: &[Symbol]) -> CMatrix {
        let d = self.dim();
        w.iter()
            .fold(CMatrix::identity(d, d), |acc, &s| &self.float[s as usize] * acc)
    }

    pub fn word_product_exact(&self, w: &[Symbol]) -> Option<QMatrix> {
        let ms = self.exact_matrices()?;
        Some(
            w.iter()
                .fold(QMatrix::identity(self.dim()), |acc, &s| &ms[s as usize] * &acc),
        )
    }

    pub fn periodic_point(&self) -> Option<SymbolicPoint> {
        self.periodic
            .as_ref()
            .map(|w| SymbolicPoint::periodic(w).expect("nonempty word"))
    }

    /// The point ẑ (agreeing with p̂ off the window [0, l)) and l.
    pub fn homoclinic_point(&self) -> Option<(SymbolicPoint, usize)> {
        let p = self.periodic.as_ref()?;
        let h = self.homoclinic.as_ref()?;
        let q = p.len();
        let window: Vec<Symbol> = (0..h.l)
            .map(|n| h.insert.get(n).copied().unwrap_or(p[n % q]))
            .collect();
        let mut past = p.clone();
        past.reverse();
        let point = SymbolicPoint {
            past: Ray::periodic(past).expect("nonempty"),
            future: Ray::new(window, p.clone()).expect("nonempty"),
        };
        Some((point, h.l))
    }

    /// Cocycle B̂(x) = Â(f⁻¹x)^* over f⁻¹, conjugated to the forward shift by
    /// the reversal x ↦ (x_{−n−1})_n. Periodic and homoclinic data map to the
    /// mirrored pair (p̂, f̂^l(ẑ)).
    pub fn adjoint(&self) -> CocycleSpec {
        let family = match &self.family {
            MatrixFamily::Exact(v) => MatrixFamily::Exact(v.iter().map(QMatrix::transpose).collect()),
            MatrixFamily::Float(v) => MatrixFamily::Float(v.iter().map(|m| m.adjoint()).collect()),
        };
        let float = family.to_float();
        let periodic = self.periodic.as_ref().map(|w| {
            let mut r = w.clone();
            r.reverse();
            r
        });
        let homoclinic = self.homoclinic_point().map(|(z, l)| {
            let mut insert: Vec<Symbol> = (0..l as i64).map(|n| z.at(n)).collect();
            insert.reverse();
            HomoclinicSpec { insert, l }
        });
        let perturbation = self.perturbation.as_ref().map(|p| Perturbation {
            epsilon: p.epsilon,
            nu: p.nu,
            past: p.future.adjoint(),
            future: p.past.adjoint(),
            weights: p.weights.clone(),
        });
        CocycleSpec {
            family,
            float,
            measure: self.measure.reversed(),
            periodic,
            homoclinic,
            perturbation,
            metric_theta: self.metric_theta,
        }
    }

    pub fn validate_point(&self, x: &SymbolicPoint) -> Result<()> {
        let m = x.max_symbol();
        if m as usize >= self.alphabet() {
            return Err(Error::SymbolOutOfRange {
                symbol: m,
                size: self.alphabet(),
            });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let field = |k: &str| v.get(k).filter(|x| !x.is_null());
        let mats = field("matrices")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::InvalidSpec("missing \"matrices\" array".into()))?;
        let family = parse_family(mats)?;
        let alphabet = match field("alphabet") {
            Some(a) => a
                .as_u64()
                .ok_or_else(|| Error::InvalidSpec("\"alphabet\" must be a positive integer".into()))?
                as usize,
            None => family.len(),
        };
        if alphabet != family.len() {
            return Err(Error::InvalidSpec(format!(
                "alphabet {alphabet} but {} matrices",
                family.len()
            )));
        }
        let measure = match field("measure") {
            None => MarkovMeasure::uniform(alphabet),
            Some(m) => {
                let transition = m
                    .get("transition")
                    .map(|t| serde_json::from_value::<Vec<Vec<f64>>>(t.clone()))
                    .transpose()
                    .map_err(|e| Error::InvalidSpec(format!("transition: {e}")))?;
                let stationary = m
                    .get("stationary")
                    .map(|t| serde_json::from_value::<Vec<f64>>(t.clone()))
                    .transpose()
                    .map_err(|e| Error::InvalidSpec(format!("stationary: {e}")))?;
                match (transition, stationary) {
                    (Some(t), Some(s)) => MarkovMeasure::new(t, s)?,
                    (Some(t), None) => MarkovMeasure::from_transition(t)?,
                    (None, Some(s)) => MarkovMeasure::bernoulli(s)?,
                    (None, None) => MarkovMeasure::uniform(alphabet),
                }
            }
        };
        let mut spec = CocycleSpec::new(family, measure)?;
        if let Some(t) = field("metric_theta") {
            let t = t
                .as_f64()
                .ok_or_else(|| Error::InvalidSpec("metric_theta must be a number".into()))?;
            spec = spec.with_metric_theta(t)?;
        }
        if let Some(p) = field("periodic_point") {
            spec = spec.with_periodic(parse_word(p)?)?;
        }
        if let Some(h) = field("homoclinic_point") {
            let insert = parse_word(
                h.get("insert")
                    .ok_or_else(|| Error::InvalidSpec("homoclinic_point needs \"insert\"".into()))?,
            )?;
            let l = h.get("l").and_then(Value::as_u64).map(|l| l as usize);
            spec = spec.with_homoclinic(insert, l)?;
        }
        if let Some(p) = field("perturbation") {
            let num = |k: &str| {
                p.get(k)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::InvalidSpec(format!("perturbation needs numeric \"{k}\"")))
            };
            let mat = |k: &str| -> Result<CMatrix> {
                let m = p
                    .get(k)
                    .ok_or_else(|| Error::InvalidSpec(format!("perturbation needs \"{k}\"")))?;
                Ok(parse_matrix(m)?.to_float())
            };
            let weights = match p.get("weights") {
                Some(w) => serde_json::from_value::<Vec<f64>>(w.clone())
                    .map_err(|e| Error::InvalidSpec(format!("weights: {e}")))?,
                None => (0..alphabet).map(|s| s as f64).collect(),
            };
            spec = spec.with_perturbation(Perturbation {
                epsilon: num("epsilon")?,
                nu: num("nu")?,
                past: mat("past")?,
                future: mat("future")?,
                weights,
            })?;
        }
        Ok(spec)
    }

    pub fn to_value(&self) -> Value {
        let matrices: Vec<Value> = match &self.family {
            MatrixFamily::Exact(v) => v.iter().map(exact_to_value).collect(),
            MatrixFamily::Float(v) => v.iter().map(float_to_value).collect(),
        };
        let mut out = json!({
            "alphabet": self.alphabet(),
            "matrices": matrices,
            "measure": {
                "transition": self.measure.transition(),
                "stationary": self.measure.stationary(),
            },
            "metric_theta": self.metric_theta,
        });
        if let Some(p) = &self.periodic {
            out["periodic_point"] = json!(p);
        }
        if let Some(h) = &self.homoclinic {
            out["homoclinic_point"] = json!({ "insert": h.insert, "l": h.l });
        }
        if let Some(p) = &self.perturbation {
            out["perturbation"] = json!({
                "epsilon": p.epsilon,
                "nu": p.nu,
                "past": float_to_value(&p.past),
                "future": float_to_value(&p.future),
                "weights": p.weights,
            });
        }
        out
    }
}

fn parse_word(v: &Value) -> Result<Vec<Symbol>> {
    serde_json::from_value::<Vec<Symbol>>(v.clone())
        .map_err(|e| Error::InvalidSpec(format!("word: {e}")))
}

enum ParsedMatrix {
    Exact(QMatrix),
    Float(CMatrix),
}

impl ParsedMatrix {
    fn to_float(&self) -> CMatrix {
        match self {
            ParsedMatrix::Exact(q) => q.to_complex(),
            ParsedMatrix::Float(m) => m.clone(),
        }
    }
}

enum Entry {
    Exact(crate::exact::Rational),
    Float(C64),
}

fn parse_entry(v: &Value) -> Result<Entry> {
    match v {
        Value::String(s) => Ok(Entry::Exact(parse_rational(s)?)),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Entry::Exact(crate::exact::q(i)))
            } else {
                Ok(Entry::Float(c(n.as_f64().ok_or(Error::NonFinite)?)))
            }
        }
        Value::Array(a) if a.len() == 2 => {
            let re = a[0].as_f64();
            let im = a[1].as_f64();
            match (re, im) {
                (Some(re), Some(im)) => Ok(Entry::Float(C64::new(re, im))),
                _ => Err(Error::InvalidSpec("complex entry must be [re, im]".into())),
            }
        }
        _ => Err(Error::InvalidSpec(format!("bad matrix entry {v}"))),
    }
}

fn parse_matrix(v: &Value) -> Result<ParsedMatrix> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::InvalidSpec("matrix must be an array of rows".into()))?;
    let n = rows.len();
    let mut entries = Vec::with_capacity(n * n);
    for r in rows {
        let r = r
            .as_array()
            .ok_or_else(|| Error::InvalidSpec("matrix row must be an array".into()))?;
        if r.len() != n {
            return Err(Error::NonSquare {
                rows: n,
                cols: r.len(),
            });
        }
        for e in r {
            entries.push(parse_entry(e)?);
        }
    }
    if n == 0 {
        return Err(Error::InvalidSpec("empty matrix".into()));
    }
    if entries.iter().all(|e| matches!(e, Entry::Exact(_))) {
        let data = entries
            .into_iter()
            .map(|e| match e {
                Entry::Exact(r) => r,
                Entry::Float(_) => unreachable!(),
            })
            .collect();
        Ok(ParsedMatrix::Exact(QMatrix::new(n, n, data)?))
    } else {
        let data: Vec<C64> = entries
            .into_iter()
            .map(|e| match e {
                Entry::Exact(r) => c(crate::exact::to_f64(&r)),
                Entry::Float(z) => z,
            })
            .collect();
        Ok(ParsedMatrix::Float(CMatrix::from_row_slice(n, n, &data)))
    }
}

fn parse_family(mats: &[Value]) -> Result<MatrixFamily> {
    let parsed: Vec<ParsedMatrix> = mats.iter().map(parse_matrix).collect::<Result<_>>()?;
    if parsed.iter().all(|m| matches!(m, ParsedMatrix::Exact(_))) {
        Ok(MatrixFamily::Exact(
            parsed
                .into_iter()
                .map(|m| match m {
                    ParsedMatrix::Exact(q) => q,
                    ParsedMatrix::Float(_) => unreachable!(),
                })
                .collect(),
        ))
    } else {
        Ok(MatrixFamily::Float(parsed.iter().map(ParsedMatrix::to_float).collect()))
    }
}

fn exact_to_value(m: &QMatrix) -> Value {
    let rows: Vec<Vec<String>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| format_rational(&m[(i, j)])).collect())
        .collect();
    json!(rows)
}

fn float_to_value(m: &CMatrix) -> Value {
    let rows: Vec<Vec<Value>> = (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| {
                    let z = m[(i, j)];
                    if z.im == 0.0 {
                        json!(z.re)
                    } else {
                        json!([z.re, z.im])
                    }
                })
                .collect()
        })
        .collect();
    json!(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{diag, frobenius};

    fn two_symbol() -> CocycleSpec {
        CocycleSpec::new(
            MatrixFamily::Exact(vec![
                QMatrix::from_i64(2, 2, &[2, 0, 0, 1]),
                QMatrix::from_i64(2, 2, &[1, 1, 1, 2]),
            ]),
            MarkovMeasure::uniform(2),
        )
        .unwrap()
        .with_periodic(vec![0])
        .unwrap()
        .with_homoclinic(vec![1], Some(2))
        .unwrap()
    }

    #[test]
    fn point_shift_roundtrip() {
        let x = SymbolicPoint::new(
            Ray::new(vec![3, 1], vec![0, 2]).unwrap(),
            Ray::new(vec![1, 1, 2], vec![0]).unwrap(),
        );
        for k in -7..=7 {
            let y = x.shift(k);
            for n in -10..10 {
                assert_eq!(y.at(n), x.at(n + k), "k={k} n={n}");
            }
            let back = y.shift(-k);
            assert!((-12..12).all(|n| back.at(n) == x.at(n)));
        }
        let r = x.reversed();
        for n in -10..10 {
            assert_eq!(r.at(n), x.at(-n - 1));
        }
    }

    #[test]
    fn periodic_point_coordinates() {
        let p = SymbolicPoint::periodic(&[0, 1, 2]).unwrap();
        for n in -9..9i64 {
            assert_eq!(p.at(n), n.rem_euclid(3) as Symbol);
        }
        assert!(p.shift(3).same_future(&p) && p.shift(3).same_past(&p));
    }

    #[test]
    fn homoclinic_layout() {
        let spec = two_symbol();
        let (z, l) = spec.homoclinic_point().unwrap();
        assert_eq!(l, 2);
        let got: Vec<Symbol> = (-3..5).map(|n| z.at(n)).collect();
        assert_eq!(got, vec![0, 0, 0, 1, 0, 0, 0, 0]);
        assert!(z.same_past(&spec.periodic_point().unwrap()));
        assert!(z.shift(l as i64).same_future(&spec.periodic_point().unwrap()));
    }

    #[test]
    fn products_follow_time_order() {
        let spec = two_symbol();
        let (z, l) = spec.homoclinic_point().unwrap();
        let a0 = &spec.matrices()[0];
        let a1 = &spec.matrices()[1];
        let expect = a0 * a1;
        assert!(frobenius(&(spec.product_along(&z, l) - &expect)) == 0.0);
        assert!(frobenius(&(spec.word_product(&[1, 0]) - &expect)) == 0.0);
        assert_eq!(
            spec.word_product_exact(&[1, 0]).unwrap(),
            &spec.exact_matrices().unwrap()[0] * &spec.exact_matrices().unwrap()[1]
        );
    }

    #[test]
    fn adjoint_of_adjoint() {
        let spec = two_symbol();
        let back = spec.adjoint().adjoint();
        assert_eq!(back.family(), spec.family());
        assert_eq!(back.periodic_word(), spec.periodic_word());
        let (z1, l1) = back.homoclinic_point().unwrap();
        let (z0, l0) = spec.homoclinic_point().unwrap();
        assert_eq!(l1, l0);
        assert!((-8..8).all(|n| z1.at(n) == z0.at(n)));
        let t = spec.measure().transition();
        for (r1, r2) in t.iter().zip(back.measure().transition()) {
            for (a, b) in r1.iter().zip(r2) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adjoint_matrices_are_conjugate_transposes() {
        let m = CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 2.0), c(3.0), C64::new(0.0, -1.0), c(4.0)]);
        let spec = CocycleSpec::new(MatrixFamily::Float(vec![m.clone()]), MarkovMeasure::uniform(1)).unwrap();
        let adj = spec.adjoint();
        assert_eq!(adj.matrices()[0], m.adjoint());
    }

    #[test]
    fn perturbation_swaps_under_adjoint() {
        let spec = two_symbol()
            .with_perturbation(Perturbation {
                epsilon: 0.1,
                nu: 1.0,
                past: diag(&[1.0, 0.0]),
                future: diag(&[0.0, 1.0]),
                weights: vec![0.0, 1.0],
            })
            .unwrap();
        let adj = spec.adjoint();
        // C(Rx) = Â(f⁻¹x)^*
        let x = SymbolicPoint::new(
            Ray::new(vec![1, 0, 1], vec![0]).unwrap(),
            Ray::new(vec![0, 1], vec![1, 0]).unwrap(),
        );
        let lhs = adj.matrix_at(&x.reversed());
        let rhs = spec.matrix_at(&x.shift(-1)).adjoint();
        assert!(frobenius(&(lhs - rhs)) < 1e-14);
    }

    #[test]
    fn holder_constant_bounds_differences() {
        let spec = two_symbol()
            .with_perturbation(Perturbation {
                epsilon: 0.2,
                nu: 0.5,
                past: diag(&[1.0, -1.0]),
                future: diag(&[0.5, 0.5]),
                weights: vec![0.0, 1.0],
            })
            .unwrap();
        let cst = spec.holder_constant();
        let base = SymbolicPoint::periodic(&[0]).unwrap();
        for k in 1..10 {
            let mut past = vec![0; k];
            past.push(1);
            let y = SymbolicPoint::new(Ray::new(past, vec![0]).unwrap(), base.future.clone());
            let dist = base.distance(&y, spec.metric_theta());
            let diff = frobenius(&(spec.matrix_at(&base) - spec.matrix_at(&y)));
            assert!(diff <= cst * dist.powf(0.5) + 1e-15);
        }
    }

    #[test]
    fn json_roundtrip() {
        let spec = two_symbol();
        let v = spec.to_value();
        let back = CocycleSpec::from_value(&v).unwrap();
        assert_eq!(back.family(), spec.family());
        let (z1, l1) = back.homoclinic_point().unwrap();
        let (z0, l0) = spec.homoclinic_point().unwrap();
        assert_eq!(l1, l0);
        assert!((-8..8).all(|n| z1.at(n) == z0.at(n)));
        let text = r#"{"alphabet":1,"matrices":[[["1/2",0],[0,"3"]]],"periodic_point":[0]}"#;
        let s = CocycleSpec::from_json(text).unwrap();
        assert!(s.is_exact());
        let text = r#"{"matrices":[[[0.5,0],[0,[1,2]]]]}"#;
        let s = CocycleSpec::from_json(text).unwrap();
        assert!(!s.is_exact());
        assert_eq!(s.matrices()[0][(1, 1)], C64::new(1.0, 2.0));
        assert!(CocycleSpec::from_json(r#"{"matrices":[[[1,2]]]}"#).is_err());
        assert!(CocycleSpec::from_json(r#"{"alphabet":2,"matrices":[[[1]]]}"#).is_err());
    }
}
