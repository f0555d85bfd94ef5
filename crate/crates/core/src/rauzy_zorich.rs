//! Rauzy induction on pairs of permutations, Zorich acceleration, their
//! integer cocycles and the antisymmetric matrix Ω_π.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::io::Write;

use nalgebra::{ComplexField, DMatrix};
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::exact::{format_rational, q, to_f64, QMatrix, Rational};
use crate::numeric::real_singular_values;

/// Default bound on single Rauzy steps grouped into one Zorich step.
pub const ZORICH_CAP: u64 = 1_000_000;

/// Pair of permutations given as symbol lists over {1, …, d}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PermutationPair {
    top: Vec<usize>,
    bottom: Vec<usize>,
}

impl PermutationPair {
    pub fn new(top: Vec<usize>, bottom: Vec<usize>) -> Result<Self> {
        let d = top.len();
        if d < 2 || bottom.len() != d {
            return Err(Error::InvalidPermutation(format!(
                "rows of lengths {} and {}; need equal lengths d ≥ 2",
                top.len(),
                bottom.len()
            )));
        }
        for row in [&top, &bottom] {
            let mut seen = vec![false; d + 1];
            for &s in row {
                if s == 0 || s > d || seen[s] {
                    return Err(Error::InvalidPermutation(format!(
                        "{row:?} is not a permutation of 1..={d}"
                    )));
                }
                seen[s] = true;
            }
        }
        let pair = Self { top, bottom };
        if !pair.is_irreducible() {
            return Err(Error::Reducible);
        }
        Ok(pair)
    }

    /// Top row 1..d and bottom row d..1.
    pub fn reversal(d: usize) -> Result<Self> {
        Self::new((1..=d).collect(), (1..=d).rev().collect())
    }

    pub fn d(&self) -> usize {
        self.top.len()
    }

    pub fn top(&self) -> &[usize] {
        &self.top
    }

    pub fn bottom(&self) -> &[usize] {
        &self.bottom
    }

    pub fn row(&self, eps: u8) -> &[usize] {
        if eps == 0 {
            &self.top
        } else {
            &self.bottom
        }
    }

    fn row_mut(&mut self, eps: u8) -> &mut Vec<usize> {
        if eps == 0 {
            &mut self.top
        } else {
            &mut self.bottom
        }
    }

    /// 1-based position of `symbol` in row `eps`.
    pub fn position(&self, eps: u8, symbol: usize) -> usize {
        self.row(eps).iter().position(|&s| s == symbol).expect("symbol in row") + 1
    }

    /// Last symbol α(ε) of row ε.
    pub fn last(&self, eps: u8) -> usize {
        *self.row(eps).last().expect("nonempty")
    }

    /// No proper prefix of the top row has the same symbols as the
    /// corresponding prefix of the bottom row.
    pub fn is_irreducible(&self) -> bool {
        let d = self.d();
        let mut top = vec![false; d + 1];
        let mut bottom = vec![false; d + 1];
        let mut shared = 0;
        for k in 0..d - 1 {
            let (t, b) = (self.top[k], self.bottom[k]);
            top[t] = true;
            bottom[b] = true;
            shared += usize::from(bottom[t]) + usize::from(top[b] && b != t);
            if shared == k + 1 {
                return false;
            }
        }
        true
    }

    /// The pair after a Rauzy move of type ε: the loser α(1−ε) is moved to
    /// just after the winner α(ε) in row 1−ε.
    pub fn moved(&self, eps: u8) -> Self {
        let mut out = self.clone();
        let winner = self.last(eps);
        let k = self.position(1 - eps, winner);
        let row = out.row_mut(1 - eps);
        let loser = row.pop().expect("nonempty");
        row.insert(k, loser);
        out
    }
}

impl fmt::Display for PermutationPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ");
        write!(f, "({} / {})", join(&self.top), join(&self.bottom))
    }
}

/// Point of the open simplex, indexed by symbol − 1.
#[derive(Clone, Debug, PartialEq)]
pub enum SimplexPoint {
    Exact(Vec<Rational>),
    Float(Vec<f64>),
}

impl SimplexPoint {
    pub fn exact(lambda: Vec<Rational>) -> Result<Self> {
        if lambda.iter().any(|x| !x.is_positive()) {
            return Err(Error::InvalidSimplexPoint("entries must be positive".into()));
        }
        let sum: Rational = lambda.iter().sum();
        if !sum.is_one() {
            return Err(Error::InvalidSimplexPoint(format!(
                "entries sum to {}",
                format_rational(&sum)
            )));
        }
        Ok(Self::Exact(lambda))
    }

    pub fn float(lambda: Vec<f64>) -> Result<Self> {
        if lambda.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidSimplexPoint("entries must be positive".into()));
        }
        let sum: f64 = lambda.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSimplexPoint(format!("entries sum to {sum}")));
        }
        Ok(Self::Float(lambda))
    }

    /// Uniform point of the simplex.
    pub fn random_float<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Self {
        let e: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
        let s: f64 = e.iter().sum();
        Self::Float(e.into_iter().map(|x| x / s).collect())
    }

    /// Positive integers below 2⁴⁰, normalized exactly.
    pub fn random_exact<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Self {
        let n: Vec<i64> = (0..d).map(|_| rng.random_range(1..1i64 << 40)).collect();
        let s: i64 = n.iter().sum();
        Self::Exact(n.into_iter().map(|x| Rational::new(BigInt::from(x), BigInt::from(s))).collect())
    }

    pub fn d(&self) -> usize {
        match self {
            SimplexPoint::Exact(v) => v.len(),
            SimplexPoint::Float(v) => v.len(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            SimplexPoint::Exact(v) => v.iter().map(to_f64).collect(),
            SimplexPoint::Float(v) => v.clone(),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, SimplexPoint::Exact(_))
    }

    /// Type ε with λ_{α(ε)} > λ_{α(1−ε)}.
    pub fn rauzy_type(&self, pi: &PermutationPair) -> Result<u8> {
        let (a0, a1) = (pi.last(0) - 1, pi.last(1) - 1);
        let ord = match self {
            SimplexPoint::Exact(v) => v[a0].cmp(&v[a1]),
            SimplexPoint::Float(v) => v[a0].partial_cmp(&v[a1]).ok_or(Error::NonFinite)?,
        };
        match ord {
            std::cmp::Ordering::Greater => Ok(0),
            std::cmp::Ordering::Less => Ok(1),
            std::cmp::Ordering::Equal => Err(Error::RauzyTie {
                winner: a0 + 1,
                loser: a1 + 1,
            }),
        }
    }
}

/// Scalars lengths can be stored in.
trait Length: Clone + PartialOrd + std::ops::Sub<Output = Self> + std::ops::Add<Output = Self> {
    fn zero() -> Self;
    fn mul(&self, n: u64) -> Self;
    /// floor(self / other) for positive arguments.
    fn floor_div(&self, other: &Self) -> Option<u64>;
    fn div(&self, other: &Self) -> Self;
}

impl Length for f64 {
    fn zero() -> Self {
        0.0
    }
    fn mul(&self, n: u64) -> Self {
        self * n as f64
    }
    fn floor_div(&self, other: &Self) -> Option<u64> {
        let r = (self / other).floor();
        (r.is_finite() && r < 1.8e19).then_some(r as u64)
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
}

impl Length for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn mul(&self, n: u64) -> Self {
        self * Rational::from_integer(BigInt::from(n))
    }
    fn floor_div(&self, other: &Self) -> Option<u64> {
        (self / other).floor().to_integer().to_u64()
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
}

#[derive(Clone, Debug)]
pub struct RauzyStep {
    pub eps: u8,
    pub winner: usize,
    pub loser: usize,
    pub new_pair: PermutationPair,
    pub new_lambda: SimplexPoint,
    /// R_{π,λ}: subtracts the loser's length from the winner's.
    pub matrix: QMatrix,
    /// R⁻¹, with non-negative integer entries.
    pub inverse_matrix: QMatrix,
    /// Σ (Rλ)_i, equal to 1 − λ_{α(1−ε)} on the simplex.
    pub normalizer: f64,
}

fn elementary(d: usize, row: usize, col: usize, value: i64) -> QMatrix {
    let mut m = QMatrix::identity(d);
    m[(row, col)] = q(value);
    m
}

pub fn rauzy_step(pi: &PermutationPair, lam: &SimplexPoint) -> Result<RauzyStep> {
    let d = pi.d();
    if lam.d() != d {
        return Err(Error::DimensionMismatch(format!(
            "λ has {} entries for d = {d}",
            lam.d()
        )));
    }
    let eps = lam.rauzy_type(pi)?;
    let (w, l) = (pi.last(eps) - 1, pi.last(1 - eps) - 1);
    let (new_lambda, normalizer) = match lam {
        SimplexPoint::Exact(v) => {
            let (nv, a) = subtract_normalize(v, w, &[(l, 1)]);
            (SimplexPoint::Exact(nv), to_f64(&a))
        }
        SimplexPoint::Float(v) => {
            let (nv, a) = subtract_normalize(v, w, &[(l, 1)]);
            (SimplexPoint::Float(nv), a)
        }
    };
    Ok(RauzyStep {
        eps,
        winner: w + 1,
        loser: l + 1,
        new_pair: pi.moved(eps),
        new_lambda,
        matrix: elementary(d, w, l, -1),
        inverse_matrix: elementary(d, w, l, 1),
        normalizer,
    })
}

/// Subtracts Σ count·λ_s from λ_w and renormalizes.
fn subtract_normalize<T: Length>(v: &[T], w: usize, counts: &[(usize, u64)]) -> (Vec<T>, T) {
    let mut out = v.to_vec();
    let mut sub = T::zero();
    for &(s, n) in counts {
        sub = sub + v[s].mul(n);
    }
    out[w] = v[w].clone() - sub;
    let a = out.iter().cloned().fold(T::zero(), |acc, x| acc + x);
    let out = out.iter().map(|x| x.div(&a)).collect();
    (out, a)
}

#[derive(Clone, Debug)]
pub struct ZorichStep {
    pub eps: u8,
    /// Number of grouped Rauzy steps.
    pub n: u64,
    pub winner: usize,
    /// (symbol, times its length was subtracted from the winner's).
    pub counts: Vec<(usize, u64)>,
    pub start_pair: PermutationPair,
    pub end_pair: PermutationPair,
    pub end_lambda: SimplexPoint,
}

impl ZorichStep {
    /// Z = R_n ⋯ R_1 = I − Σ counts_s E_{winner,s}.
    pub fn composite(&self) -> QMatrix {
        let d = self.start_pair.d();
        let mut m = QMatrix::identity(d);
        for &(s, c) in &self.counts {
            m[(self.winner - 1, s - 1)] = -Rational::from_integer(BigInt::from(c));
        }
        m
    }

    /// Z⁻¹ = I + Σ counts_s E_{winner,s}.
    pub fn composite_inverse(&self) -> QMatrix {
        let d = self.start_pair.d();
        let mut m = QMatrix::identity(d);
        for &(s, c) in &self.counts {
            m[(self.winner - 1, s - 1)] = Rational::from_integer(BigInt::from(c));
        }
        m
    }

    pub fn composite_f64(&self) -> DMatrix<f64> {
        let d = self.start_pair.d();
        let mut m = DMatrix::identity(d, d);
        for &(s, c) in &self.counts {
            m[(self.winner - 1, s - 1)] = -(c as f64);
        }
        m
    }

    /// Z^{−1*} applied to each column of `frame`: row s gains counts_s times
    /// the winner's row.
    pub fn apply_dual<T: ComplexField<RealField = f64> + Copy>(&self, frame: &mut DMatrix<T>) {
        let w = self.winner - 1;
        for &(s, c) in &self.counts {
            let c = T::from_real(c as f64);
            for j in 0..frame.ncols() {
                let add = frame[(w, j)] * c;
                frame[(s - 1, j)] += add;
            }
        }
    }

    /// Z⁻¹ applied to each column of `frame`: the winner's row gains
    /// counts_s times row s.
    pub fn apply_inverse<T: ComplexField<RealField = f64> + Copy>(&self, frame: &mut DMatrix<T>) {
        let w = self.winner - 1;
        for j in 0..frame.ncols() {
            let mut add = T::zero();
            for &(s, c) in &self.counts {
                add += frame[(s - 1, j)] * T::from_real(c as f64);
            }
            frame[(w, j)] += add;
        }
    }

    /// log of the operator norm of Z.
    pub fn log_norm(&self) -> f64 {
        let z = self.composite_f64();
        real_singular_values(&z)[0].ln()
    }
}

/// Groups consecutive Rauzy steps of one type: the winner stays fixed while
/// the losers cycle through the symbols after it in the other row.
pub fn zorich_step(pi: &PermutationPair, lam: &SimplexPoint, cap: u64) -> Result<ZorichStep> {
    let d = pi.d();
    if lam.d() != d {
        return Err(Error::DimensionMismatch(format!(
            "λ has {} entries for d = {d}",
            lam.d()
        )));
    }
    let eps = lam.rauzy_type(pi)?;
    let winner = pi.last(eps);
    let k = pi.position(1 - eps, winner);
    // losers in order: last symbol of the tail first
    let tail: Vec<usize> = pi.row(1 - eps)[k..].iter().rev().copied().collect();
    let (n, counts, end_lambda) = match lam {
        SimplexPoint::Exact(v) => {
            let (n, counts, nv) = accelerate(v, winner - 1, &tail, cap)?;
            (n, counts, SimplexPoint::Exact(nv))
        }
        SimplexPoint::Float(v) => {
            let (n, counts, nv) = accelerate(v, winner - 1, &tail, cap)?;
            if nv.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::RauzyTie {
                    winner,
                    loser: tail[0],
                });
            }
            (n, counts, SimplexPoint::Float(nv))
        }
    };
    let m = tail.len() as u64;
    let mut end_pair = pi.clone();
    let row = end_pair.row_mut(1 - eps);
    row[k..].rotate_right((n % m) as usize);
    Ok(ZorichStep {
        eps,
        n,
        winner,
        counts,
        start_pair: pi.clone(),
        end_pair,
        end_lambda,
    })
}

/// n = #{j ≥ 1 : P_j < λ_w} for the partial sums P_j of loser lengths; a
/// partial sum equal to λ_w is a tie.
fn accelerate<T: Length>(
    v: &[T],
    w: usize,
    tail: &[usize],
    cap: u64,
) -> Result<(u64, Vec<(usize, u64)>, Vec<T>)> {
    let r = v[w].clone();
    let s = tail.iter().fold(T::zero(), |acc, &t| acc + v[t - 1].clone());
    let mut c = r.floor_div(&s).ok_or(Error::ZorichCap {
        cap,
        partial_steps: cap,
    })?;
    // guard against float rounding in the quotient
    while c > 0 && s.mul(c) > r {
        c -= 1;
    }
    while s.mul(c + 1) <= r {
        c += 1;
    }
    let mut acc = s.mul(c);
    let mut j = 0;
    for &t in tail {
        let next = acc.clone() + v[t - 1].clone();
        if next == r {
            return Err(Error::RauzyTie { winner: w + 1, loser: t });
        }
        if next > r {
            break;
        }
        acc = next;
        j += 1;
    }
    if acc == r {
        return Err(Error::RauzyTie {
            winner: w + 1,
            loser: tail[0],
        });
    }
    let m = tail.len() as u64;
    let n = c
        .checked_mul(m)
        .and_then(|x| x.checked_add(j))
        .ok_or(Error::ZorichCap {
            cap,
            partial_steps: cap,
        })?;
    if n > cap {
        return Err(Error::ZorichCap {
            cap,
            partial_steps: cap,
        });
    }
    let counts: Vec<(usize, u64)> = tail
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, c + u64::from((i as u64) < j)))
        .collect();
    // r − acc reuses the compared partial sum, so it stays positive in floats
    let mut nv = v.to_vec();
    nv[w] = r - acc;
    let a = nv.iter().cloned().fold(T::zero(), |x, y| x + y);
    let nv = nv.iter().map(|x| x.div(&a)).collect();
    Ok((n, counts, nv))
}

/// Closure of {π} under both Rauzy moves, in BFS order.
pub fn rauzy_class(pi: &PermutationPair) -> Result<Vec<PermutationPair>> {
    rauzy_class_ordered(pi, [0, 1])
}

pub fn rauzy_class_ordered(pi: &PermutationPair, moves: [u8; 2]) -> Result<Vec<PermutationPair>> {
    if !pi.is_irreducible() {
        return Err(Error::Reducible);
    }
    let mut seen = BTreeSet::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::from([pi.clone()]);
    seen.insert(pi.clone());
    while let Some(p) = queue.pop_front() {
        for &eps in &moves {
            let next = p.moved(eps);
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
        order.push(p);
    }
    Ok(order)
}

#[derive(Clone, Debug)]
pub struct SymplecticStructure {
    pub omega: QMatrix,
    /// Columns span H_π = Ω_π(ℝ^d).
    pub range_basis: QMatrix,
    pub genus: usize,
}

impl SymplecticStructure {
    /// ω_π(Ω u, Ω v) = u · Ω v.
    pub fn form(&self, u: &[Rational], v: &[Rational]) -> Rational {
        let ov = self.omega.mul_vec(v);
        u.iter().zip(&ov).map(|(a, b)| a * b).sum()
    }

    pub fn range_basis_f64(&self) -> DMatrix<f64> {
        let b = &self.range_basis;
        DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| to_f64(&b[(i, j)]))
    }
}

/// Ω_{ij} = [π₁(j) < π₁(i)] − [π₀(j) < π₀(i)].
pub fn omega_matrix(pi: &PermutationPair) -> SymplecticStructure {
    let d = pi.d();
    let p0: Vec<usize> = (1..=d).map(|s| pi.position(0, s)).collect();
    let p1: Vec<usize> = (1..=d).map(|s| pi.position(1, s)).collect();
    let omega = QMatrix::from_fn(d, d, |i, j| {
        q(i64::from(p1[j] < p1[i]) - i64::from(p0[j] < p0[i]))
    });
    let range_basis = omega.column_space_basis();
    let genus = range_basis.ncols() / 2;
    SymplecticStructure {
        omega,
        range_basis,
        genus,
    }
}

/// Ω_{π'} R = R^{−1*} Ω_π, checked exactly.
pub fn check_symplectic_invariance(
    r: &QMatrix,
    pi_before: &PermutationPair,
    pi_after: &PermutationPair,
) -> bool {
    let Ok(r_inv) = r.inverse() else {
        return false;
    };
    let lhs = &omega_matrix(pi_after).omega * r;
    let rhs = &r_inv.transpose() * &omega_matrix(pi_before).omega;
    lhs == rhs
}

#[derive(Clone, Debug)]
pub struct OrbitRecord {
    pub step: u64,
    pub eps: u8,
    pub n: u64,
    pub log_norm: f64,
    pub lambda: Vec<f64>,
}

/// Zorich orbit of (π, λ) for `steps` accelerated steps.
pub fn zorich_orbit(
    pi: &PermutationPair,
    lam: &SimplexPoint,
    steps: u64,
    cap: u64,
) -> Result<Vec<OrbitRecord>> {
    let (mut p, mut l) = (pi.clone(), lam.clone());
    let mut out = Vec::with_capacity(steps as usize);
    for step in 0..steps {
        let z = zorich_step(&p, &l, cap)?;
        out.push(OrbitRecord {
            step,
            eps: z.eps,
            n: z.n,
            log_norm: z.log_norm(),
            lambda: z.end_lambda.to_f64(),
        });
        p = z.end_pair;
        l = z.end_lambda;
    }
    Ok(out)
}

/// CSV with columns step, type, n, log_norm_z, lambda_1..lambda_d.
pub fn write_orbit_csv<W: Write>(records: &[OrbitRecord], d: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string(), "type".into(), "n".into(), "log_norm_z".into()];
    header.extend((1..=d).map(|i| format!("lambda_{i}")));
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(&header).map_err(io)?;
    for r in records {
        let mut row = vec![
            r.step.to_string(),
            r.eps.to_string(),
            r.n.to_string(),
            format!("{:.17e}", r.log_norm),
        ];
        row.extend(r.lambda.iter().map(|x| format!("{x:.17e}")));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::qf;
    use crate::numeric::RandomSource;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn d2() -> PermutationPair {
        PermutationPair::new(vec![1, 2], vec![2, 1]).unwrap()
    }

    fn ex(v: &[(i64, i64)]) -> SimplexPoint {
        SimplexPoint::exact(v.iter().map(|&(a, b)| qf(a, b)).collect()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(matches!(
            PermutationPair::new(vec![1, 2, 3], vec![1, 3, 2]),
            Err(Error::Reducible)
        ));
        assert!(PermutationPair::new(vec![1, 2], vec![2, 2]).is_err());
        assert!(PermutationPair::new(vec![1, 2, 3, 4], vec![4, 3, 2, 1]).is_ok());
        assert!(PermutationPair::new(vec![1, 2, 3, 4], vec![2, 1, 4, 3]).is_err());
        assert!(SimplexPoint::exact(vec![qf(1, 2), qf(1, 3)]).is_err());
        assert!(SimplexPoint::float(vec![0.5, 0.0, 0.5]).is_err());
    }

    #[test]
    fn rauzy_step_examples() {
        let s = rauzy_step(&d2(), &ex(&[(7, 10), (3, 10)])).unwrap();
        assert_eq!(s.eps, 1);
        assert_eq!(s.new_lambda, ex(&[(4, 7), (3, 7)]));
        assert_eq!(s.new_pair, d2());
        assert!(s.inverse_matrix.is_integer() && s.inverse_matrix.is_nonnegative());

        let s = rauzy_step(&d2(), &ex(&[(3, 10), (7, 10)])).unwrap();
        assert_eq!(s.eps, 0);
        assert_eq!(s.new_lambda, ex(&[(3, 7), (4, 7)]));

        assert!(matches!(
            rauzy_step(&d2(), &ex(&[(1, 2), (1, 2)])),
            Err(Error::RauzyTie { .. })
        ));
    }

    #[test]
    fn zorich_step_examples() {
        let z = zorich_step(&d2(), &ex(&[(7, 10), (3, 10)]), ZORICH_CAP).unwrap();
        assert_eq!(z.n, 2);
        assert_eq!(z.end_lambda, ex(&[(1, 4), (3, 4)]));
        assert!(z.composite_inverse().is_nonnegative());

        assert!(matches!(
            zorich_step(&d2(), &ex(&[(2, 3), (1, 3)]), ZORICH_CAP),
            Err(Error::RauzyTie { .. })
        ));

        let x = (5f64.sqrt() - 1.0) / 2.0;
        let mut lam = SimplexPoint::float(vec![x, 1.0 - x]).unwrap();
        let mut p = d2();
        // x/(1 − x) = golden ratio, so the first quotient is 1 as well
        for _ in 0..3 {
            let z = zorich_step(&p, &lam, ZORICH_CAP).unwrap();
            assert_eq!(z.n, 1);
            p = z.end_pair;
            lam = z.end_lambda;
        }
    }

    #[test]
    fn zorich_matches_single_steps() {
        let mut rng = RandomSource::new(5, 0).rng();
        for d in 2..=6 {
            let pi = PermutationPair::reversal(d).unwrap();
            for _ in 0..20 {
                let lam = SimplexPoint::random_exact(&mut rng, d);
                let z = zorich_step(&pi, &lam, ZORICH_CAP).unwrap();
                let (mut p, mut l) = (pi.clone(), lam.clone());
                let mut prod = QMatrix::identity(d);
                for _ in 0..z.n {
                    let s = rauzy_step(&p, &l).unwrap();
                    assert_eq!(s.eps, z.eps);
                    prod = &s.matrix * &prod;
                    p = s.new_pair;
                    l = s.new_lambda;
                }
                assert_ne!(l.rauzy_type(&p).unwrap(), z.eps);
                assert_eq!(p, z.end_pair);
                assert_eq!(l, z.end_lambda);
                assert_eq!(prod, z.composite());
            }
        }
    }

    #[test]
    fn zorich_cap() {
        // λ₁/λ₂ = p − 1/2, so n = p − 1 without a tie
        let p = 1_000_000_007;
        let lam = SimplexPoint::exact(vec![qf(2 * p - 1, 2 * p + 1), qf(2, 2 * p + 1)]).unwrap();
        assert!(matches!(
            zorich_step(&d2(), &lam, 1000),
            Err(Error::ZorichCap { cap: 1000, .. })
        ));
        assert_eq!(zorich_step(&d2(), &lam, u64::MAX).unwrap().n, p as u64 - 1);
    }

    #[test]
    fn rauzy_class_examples() {
        assert_eq!(rauzy_class(&d2()).unwrap().len(), 1);
        for d in [3, 4, 5] {
            let pi = PermutationPair::reversal(d).unwrap();
            let a: BTreeSet<_> = rauzy_class(&pi).unwrap().into_iter().collect();
            let b: BTreeSet<_> = rauzy_class_ordered(&pi, [1, 0]).unwrap().into_iter().collect();
            assert_eq!(a, b);
            assert!(a.iter().all(PermutationPair::is_irreducible));
            for p in &a {
                assert!(a.contains(&p.moved(0)) && a.contains(&p.moved(1)));
            }
        }
        assert_eq!(rauzy_class(&PermutationPair::reversal(3).unwrap()).unwrap().len(), 3);
        assert_eq!(rauzy_class(&PermutationPair::reversal(4).unwrap()).unwrap().len(), 7);
    }

    #[test]
    fn omega_examples() {
        let s = omega_matrix(&d2());
        assert_eq!(s.omega, QMatrix::from_i64(2, 2, &[0, 1, -1, 0]));
        assert_eq!(s.genus, 1);
        assert_eq!(s.range_basis.ncols(), 2);
        for d in 2..=6 {
            for p in rauzy_class(&PermutationPair::reversal(d).unwrap()).unwrap() {
                let s = omega_matrix(&p);
                assert_eq!(s.omega.transpose(), s.omega.neg());
                assert_eq!(s.range_basis.ncols() % 2, 0);
            }
        }
        assert_eq!(omega_matrix(&PermutationPair::reversal(4).unwrap()).genus, 2);
        assert_eq!(omega_matrix(&PermutationPair::reversal(3).unwrap()).genus, 1);
    }

    #[test]
    fn symplectic_invariance_and_mutation() {
        let s = rauzy_step(&d2(), &ex(&[(7, 10), (3, 10)])).unwrap();
        assert!(check_symplectic_invariance(&s.matrix, &d2(), &s.new_pair));
        let mut bad = s.matrix.clone();
        bad[(0, 0)] = q(2);
        assert!(!check_symplectic_invariance(&bad, &d2(), &s.new_pair));

        let mut rng = RandomSource::new(11, 0).rng();
        let mut checked = 0;
        for d in 2..=5 {
            let class = rauzy_class(&PermutationPair::reversal(d).unwrap()).unwrap();
            for _ in 0..25 {
                let p = &class[rng.random_range(0..class.len())];
                let lam = SimplexPoint::random_exact(&mut rng, d);
                let s = rauzy_step(p, &lam).unwrap();
                assert!(check_symplectic_invariance(&s.matrix, p, &s.new_pair));
                checked += 1;
            }
        }
        assert_eq!(checked, 100);
    }

    #[test]
    fn zorich_composite_is_symplectic_and_preserves_form() {
        let mut rng = RandomSource::new(12, 0).rng();
        for d in 2..=6 {
            let mut p = PermutationPair::reversal(d).unwrap();
            let mut lam = SimplexPoint::random_exact(&mut rng, d);
            for _ in 0..10 {
                let z = zorich_step(&p, &lam, ZORICH_CAP).unwrap();
                let zm = z.composite();
                assert!(z.composite_inverse().is_integer() && z.composite_inverse().is_nonnegative());
                assert!(check_symplectic_invariance(&zm, &z.start_pair, &z.end_pair));
                let before = omega_matrix(&z.start_pair);
                let after = omega_matrix(&z.end_pair);
                let u: Vec<Rational> = (0..d).map(|_| q(rng.random_range(-9..10))).collect();
                let v: Vec<Rational> = (0..d).map(|_| q(rng.random_range(-9..10))).collect();
                // x = Ω u maps to Z^{−1*} x = Ω' Z u
                let (zu, zv) = (zm.mul_vec(&u), zm.mul_vec(&v));
                assert_eq!(before.form(&u, &v), after.form(&zu, &zv));
                let x = before.omega.mul_vec(&u);
                assert_eq!(zm.inverse().unwrap().transpose().mul_vec(&x), after.omega.mul_vec(&zu));
                p = z.end_pair;
                lam = z.end_lambda;
            }
        }
    }

    #[test]
    fn apply_dual_matches_matrix() {
        let mut rng = RandomSource::new(13, 0).rng();
        let pi = PermutationPair::reversal(4).unwrap();
        let lam = SimplexPoint::random_float(&mut rng, 4);
        let z = zorich_step(&pi, &lam, ZORICH_CAP).unwrap();
        let mut frame = DMatrix::from_fn(4, 2, |i, j| (i * 3 + j) as f64 - 2.5);
        let inv = z.composite_f64().try_inverse().unwrap();
        let expected = inv.transpose() * &frame;
        let expected_inv = &inv * &frame;
        let mut other = frame.clone();
        z.apply_dual(&mut frame);
        z.apply_inverse(&mut other);
        assert!((frame - expected).norm() < 1e-9);
        assert!((other - expected_inv).norm() < 1e-9);
    }

    fn continued_fraction(mut x: Rational, terms: usize) -> Vec<u64> {
        let mut out = Vec::new();
        for _ in 0..terms {
            let a = x.floor();
            out.push(a.to_integer().to_u64().unwrap());
            let f = x - a;
            if f.is_zero() {
                break;
            }
            x = f.recip();
        }
        out
    }

    #[test]
    fn d2_zorich_is_continued_fraction() {
        let mut rng = RandomSource::new(14, 0).rng();
        for _ in 0..20 {
            let x: f64 = rng.random_range(0.01..0.99);
            let xr = Rational::from_float(x).unwrap();
            let lam = SimplexPoint::exact(vec![xr.clone(), Rational::one() - &xr]).unwrap();
            let ratio = if x > 0.5 {
                &xr / (Rational::one() - &xr)
            } else {
                (Rational::one() - &xr) / &xr
            };
            let cf = continued_fraction(ratio, 12);
            let (mut p, mut l) = (d2(), lam);
            for &a in &cf[..cf.len() - 1] {
                let z = zorich_step(&p, &l, u64::MAX).unwrap();
                assert_eq!(z.n, a);
                p = z.end_pair;
                l = z.end_lambda;
            }
        }
    }

    #[test]
    fn orbit_csv_shape() {
        let pi = PermutationPair::reversal(3).unwrap();
        let lam = SimplexPoint::random_float(&mut RandomSource::new(1, 0).rng(), 3);
        let rec = zorich_orbit(&pi, &lam, 5, ZORICH_CAP).unwrap();
        let mut buf = Vec::new();
        write_orbit_csv(&rec, 3, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,type,n,log_norm_z,lambda_1,lambda_2,lambda_3");
        assert_eq!(lines.len(), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn steps_stay_in_simplex(seed in 0u64..10_000, d in 2usize..7) {
            let mut rng = RandomSource::new(seed, 0).rng();
            let mut p = PermutationPair::reversal(d).unwrap();
            let mut l = SimplexPoint::random_exact(&mut rng, d);
            for _ in 0..20 {
                let s = rauzy_step(&p, &l).unwrap();
                prop_assert!(s.inverse_matrix.is_nonnegative() && s.inverse_matrix.is_integer());
                match &s.new_lambda {
                    SimplexPoint::Exact(v) => {
                        prop_assert!(v.iter().all(|x| x.is_positive()));
                        prop_assert!(v.iter().sum::<Rational>().is_one());
                    }
                    SimplexPoint::Float(_) => unreachable!(),
                }
                p = s.new_pair;
                l = s.new_lambda;
            }
        }
    }
}
