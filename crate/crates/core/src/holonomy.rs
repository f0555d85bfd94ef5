//! Fiber bunching checks and stable/unstable holonomies as Cauchy limits.

use serde::Serialize;

use crate::cocycle::{CocycleSpec, SymbolicPoint};
use crate::error::{Error, Result};
use crate::numeric::{frobenius, inverse, operator_norm, CMatrix};
use crate::shift_space::Symbol;

/// Words enumerated exhaustively by the bunching check; beyond this the
/// check samples nothing and reports the family as not finitely checkable.
pub const BUNCHING_WORD_CAP: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    Stable,
    Unstable,
}

#[derive(Clone, Debug)]
pub struct HolonomyMap {
    pub source: SymbolicPoint,
    pub target: SymbolicPoint,
    pub direction: Direction,
    pub matrix: CMatrix,
    /// Last Cauchy increment; 0 for exact identities.
    pub residual: f64,
    pub iterations_used: usize,
    /// ‖H_{n+1} − H_n‖ for each step taken.
    pub increments: Vec<f64>,
}

impl HolonomyMap {
    /// Ratio ρ of the least-squares line through log increments: the
    /// increments behave like C ρⁿ. `None` with fewer than three usable
    /// increments.
    pub fn fitted_ratio(&self) -> Option<f64> {
        fit_ratio(&self.increments)
    }
}

/// Least-squares slope of log increments, exponentiated.
pub fn fit_ratio(increments: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = increments
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(i, &v)| (i as f64, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx).exp())
}

#[derive(Clone, Debug, Serialize)]
pub struct BunchingReport {
    pub n: usize,
    /// Bound for ‖Â^N(x)^{±1}‖ and the Hölder constant of Â^N.
    pub c: f64,
    pub nu: f64,
    /// sup ‖Â^N‖‖Â^{−N}‖θ^ν over the representatives.
    pub tau: f64,
    /// Contraction of the metric under f^N on local stable sets.
    pub theta: f64,
    pub satisfied: bool,
    /// Word of length N realizing the supremum.
    pub worst_word: Vec<Symbol>,
}

/// Sup over length-N words of ‖Â^N‖‖(Â^N)⁻¹‖θ^ν with θ = θ₀^N.
///
/// Perturbed cocycles are evaluated at representatives with both extreme
/// constant continuations of each word; that samples the Hölder family
/// rather than certifying it.
pub fn check_fiber_bunching(spec: &CocycleSpec, n: usize, nu: f64) -> Result<BunchingReport> {
    if n == 0 {
        return Err(Error::Precondition("N must be at least 1".into()));
    }
    let a = spec.alphabet();
    let count = (a as f64).powi(n as i32);
    if count > BUNCHING_WORD_CAP as f64 {
        return Err(Error::NotFinitelyCheckable(format!(
            "{a}^{n} words exceed the enumeration cap"
        )));
    }
    let theta = spec.metric_theta().powi(n as i32);
    let factor = theta.powf(nu);
    let mut tau: f64 = 0.0;
    let mut c: f64 = 0.0;
    let mut worst_word = vec![0; n];
    let fills: Vec<Symbol> = if spec.is_locally_constant() {
        vec![0]
    } else {
        vec![0, (a - 1) as Symbol]
    };
    let mut word = vec![0 as Symbol; n];
    loop {
        if word_admissible(spec, &word) {
            for &fill in &fills {
                let x = SymbolicPoint::new(
                    crate::cocycle::Ray::periodic(vec![fill])?,
                    crate::cocycle::Ray::new(word.clone(), vec![fill])?,
                );
                let m = spec.product_along(&x, n);
                let inv = inverse(&m).map_err(|_| {
                    Error::NotFinitelyCheckable("a word product is singular".into())
                })?;
                let (nm, ni) = (operator_norm(&m), operator_norm(&inv));
                c = c.max(nm).max(ni);
                let t = nm * ni * factor;
                if t > tau {
                    tau = t;
                    worst_word = word.clone();
                }
            }
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                let holder = spec.holder_constant() * c.powi(n as i32) * n as f64;
                return Ok(BunchingReport {
                    n,
                    c: c.max(holder),
                    nu,
                    tau,
                    theta,
                    satisfied: tau < 1.0 - 1e-12,
                    worst_word,
                });
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

fn word_admissible(spec: &CocycleSpec, w: &[Symbol]) -> bool {
    w.windows(2).all(|p| spec.measure().p(p[0], p[1]) > 0.0)
}

fn identity_map(x: &SymbolicPoint, y: &SymbolicPoint, d: usize, direction: Direction) -> HolonomyMap {
    HolonomyMap {
        source: x.clone(),
        target: y.clone(),
        direction,
        matrix: CMatrix::identity(d, d),
        residual: 0.0,
        iterations_used: 0,
        increments: Vec::new(),
    }
}

/// H^s_{x,y} = lim Âⁿ(y)⁻¹ Âⁿ(x) for y in the local stable set of x.
pub fn stable_holonomy(
    spec: &CocycleSpec,
    x: &SymbolicPoint,
    y: &SymbolicPoint,
    tol: f64,
    cap: usize,
) -> Result<HolonomyMap> {
    spec.validate_point(x)?;
    spec.validate_point(y)?;
    if !x.same_future(y) {
        return Err(Error::NotOnLocalSet("stable"));
    }
    let d = spec.dim();
    if spec.is_locally_constant() || x == y {
        return Ok(identity_map(x, y, d, Direction::Stable));
    }
    // H_{n+1} − H_n = Âⁿ(y)⁻¹ Â(fⁿy)⁻¹ (Â(fⁿx) − Â(fⁿy)) Âⁿ(x)
    let mut px = CMatrix::identity(d, d);
    let mut py_inv = CMatrix::identity(d, d);
    let mut h = CMatrix::identity(d, d);
    let (mut xn, mut yn) = (x.clone(), y.clone());
    let mut increments = Vec::new();
    for n in 0..cap {
        let ax = spec.matrix_at(&xn);
        let ay_inv = inverse(&spec.matrix_at(&yn))?;
        let step = &py_inv * &ay_inv * spec.matrix_difference(&xn, &yn) * &px;
        let inc = frobenius(&step);
        increments.push(inc);
        h += step;
        px = ax * px;
        py_inv *= ay_inv;
        if !inc.is_finite() {
            break;
        }
        if inc < tol {
            return Ok(HolonomyMap {
                source: x.clone(),
                target: y.clone(),
                direction: Direction::Stable,
                matrix: h,
                residual: inc,
                iterations_used: n + 1,
                increments,
            });
        }
        xn = xn.shift(1);
        yn = yn.shift(1);
    }
    Err(Error::HolonomyDiverged { increments })
}

/// H^u_{x,y} = lim Âⁿ(f⁻ⁿy) Âⁿ(f⁻ⁿx)⁻¹ for y in the local unstable set of x.
pub fn unstable_holonomy(
    spec: &CocycleSpec,
    x: &SymbolicPoint,
    y: &SymbolicPoint,
    tol: f64,
    cap: usize,
) -> Result<HolonomyMap> {
    spec.validate_point(x)?;
    spec.validate_point(y)?;
    if !x.same_past(y) {
        return Err(Error::NotOnLocalSet("unstable"));
    }
    let d = spec.dim();
    if spec.is_locally_constant() || x == y {
        return Ok(identity_map(x, y, d, Direction::Unstable));
    }
    // H_{n+1} − H_n = Bⁿ(y) (Â(f⁻ⁿ⁻¹y) − Â(f⁻ⁿ⁻¹x)) Â(f⁻ⁿ⁻¹x)⁻¹ Bⁿ(x)⁻¹
    let mut by = CMatrix::identity(d, d);
    let mut bx_inv = CMatrix::identity(d, d);
    let mut h = CMatrix::identity(d, d);
    let mut increments = Vec::new();
    for n in 1..=cap {
        let xs = x.shift(-(n as i64));
        let ys = y.shift(-(n as i64));
        let ay = spec.matrix_at(&ys);
        let ax_inv = inverse(&spec.matrix_at(&xs))?;
        let step = &by * spec.matrix_difference(&ys, &xs) * &ax_inv * &bx_inv;
        let inc = frobenius(&step);
        increments.push(inc);
        h += step;
        by *= ay;
        bx_inv = ax_inv * bx_inv;
        if !inc.is_finite() {
            break;
        }
        if inc < tol {
            return Ok(HolonomyMap {
                source: x.clone(),
                target: y.clone(),
                direction: Direction::Unstable,
                matrix: h,
                residual: inc,
                iterations_used: n,
                increments,
            });
        }
    }
    Err(Error::HolonomyDiverged { increments })
}
