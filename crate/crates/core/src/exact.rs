//! Exact linear algebra over arbitrary-precision rationals.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::numeric::{c, eigen_decomposition, CMatrix};

pub type Rational = BigRational;

pub fn q(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn qf(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses "p/q", "p", or a finite decimal like "0.25".
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|ch| ch.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = int.starts_with('-');
        let int_part: BigInt = if int.is_empty() || int == "-" || int == "+" {
            BigInt::zero()
        } else {
            int.parse().map_err(|_| bad())?
        };
        let frac_part: BigInt = frac.parse().map_err(|_| bad())?;
        let den = BigInt::from(10u32).pow(frac.len() as u32);
        let mut r = Rational::from_integer(int_part.abs()) + Rational::new(frac_part, den);
        if neg {
            r = -r;
        }
        return Ok(r);
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(n))
}

pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Ratio of huge integers: scale down by the shared bit length.
        let nb = r.numer().bits() as i64;
        let db = r.denom().bits() as i64;
        let shift = (nb.max(db) - 1000).max(0) as usize;
        let n = (r.numer() >> shift).to_f64().unwrap_or(f64::INFINITY);
        let d = (r.denom() >> shift).to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

/// Dense row-major matrix of rationals.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct QMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl fmt::Debug for QMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "QMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| format_rational(&self[(i, j)]))
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for QMatrix {
    type Output = Rational;
    fn index(&self, (i, j): (usize, usize)) -> &Rational {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for QMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rational {
        &mut self.data[i * self.cols + j]
    }
}

impl QMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Rational>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = Rational::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Rational) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_i64(rows: usize, cols: usize, entries: &[i64]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        Self::from_fn(rows, cols, |i, j| q(entries[i * cols + j]))
    }

    pub fn diagonal(values: &[Rational]) -> Self {
        let d = values.len();
        Self::from_fn(d, d, |i, j| {
            if i == j {
                values[i].clone()
            } else {
                Rational::zero()
            }
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[Rational] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<Rational> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn from_columns(rows: usize, columns: &[Vec<Rational>]) -> Self {
        Self::from_fn(rows, columns.len(), |i, j| columns[j][i].clone())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn neg(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| -self[(i, j)].clone())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, |i, j| &self[(i, j)] + &other[(i, j)])
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, |i, j| &self[(i, j)] - &other[(i, j)])
    }

    pub fn scale(&self, s: &Rational) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| &self[(i, j)] * s)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(k, j)];
                    if !b.is_zero() {
                        out[(i, j)] += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Rational]) -> Vec<Rational> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let mut s = Rational::zero();
                for (j, x) in v.iter().enumerate() {
                    s += &self[(i, j)] * x;
                }
                s
            })
            .collect()
    }

    pub fn pow(&self, mut n: u64) -> Self {
        assert!(self.is_square());
        let mut base = self.clone();
        let mut acc = Self::identity(self.rows);
        while n > 0 {
            if n & 1 == 1 {
                acc = &acc * &base;
            }
            n >>= 1;
            if n > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])].clone())
    }

    pub fn is_integer(&self) -> bool {
        self.data.iter().all(|x| x.is_integer())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|x| !x.is_negative())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn to_complex(&self) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |i, j| c(to_f64(&self[(i, j)])))
    }

    /// Reduced row echelon form and pivot columns.
    pub fn rref(&self) -> (Self, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for col in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| !m[(i, col)].is_zero()) else {
                continue;
            };
            m.swap_rows(r, p);
            let inv = m[(r, col)].recip();
            for j in col..m.cols {
                let v = &m[(r, j)] * &inv;
                m[(r, j)] = v;
            }
            for i in 0..m.rows {
                if i != r && !m[(i, col)].is_zero() {
                    let f = m[(i, col)].clone();
                    for j in col..m.cols {
                        let v = &m[(r, j)] * &f;
                        m[(i, j)] -= v;
                    }
                }
            }
            pivots.push(col);
            r += 1;
        }
        (m, pivots)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.data.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Basis of the right kernel, one vector per free column.
    pub fn nullspace(&self) -> Vec<Vec<Rational>> {
        let (r, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|j| !pivots.contains(j)).collect();
        free.iter()
            .map(|&f| {
                let mut v = vec![Rational::zero(); self.cols];
                v[f] = Rational::one();
                for (row, &p) in pivots.iter().enumerate() {
                    v[p] = -r[(row, f)].clone();
                }
                v
            })
            .collect()
    }

    /// Columns of `self` at the pivot positions: a basis of the column space.
    pub fn column_space_basis(&self) -> Self {
        let (_, pivots) = self.rref();
        self.submatrix(&(0..self.rows).collect::<Vec<_>>(), &pivots)
    }

    pub fn determinant(&self) -> Result<Rational> {
        if !self.is_square() {
            return Err(Error::NonSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let mut m = self.clone();
        let mut det = Rational::one();
        for col in 0..n {
            let Some(p) = (col..n).find(|&i| !m[(i, col)].is_zero()) else {
                return Ok(Rational::zero());
            };
            if p != col {
                m.swap_rows(p, col);
                det = -det;
            }
            let piv = m[(col, col)].clone();
            det *= &piv;
            for i in col + 1..n {
                if m[(i, col)].is_zero() {
                    continue;
                }
                let f = &m[(i, col)] / &piv;
                for j in col..n {
                    let v = &m[(col, j)] * &f;
                    m[(i, j)] -= v;
                }
            }
        }
        Ok(det)
    }

    pub fn inverse(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::NonSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let aug = Self::from_fn(n, 2 * n, |i, j| {
            if j < n {
                self[(i, j)].clone()
            } else if j - n == i {
                Rational::one()
            } else {
                Rational::zero()
            }
        });
        let (r, pivots) = aug.rref();
        if pivots.len() < n || pivots[n - 1] != n - 1 {
            return Err(Error::Singular("exact inverse".into()));
        }
        Ok(Self::from_fn(n, n, |i, j| r[(i, j + n)].clone()))
    }

    /// Coefficients c_0..c_n of det(xI − A), c_n = 1 (Faddeev–LeVerrier).
    pub fn characteristic_polynomial(&self) -> Vec<Rational> {
        assert!(self.is_square());
        let n = self.rows;
        let mut coeffs = vec![Rational::zero(); n + 1];
        coeffs[n] = Rational::one();
        let mut m = Self::zeros(n, n);
        for k in 1..=n {
            let mut next = self * &m;
            for i in 0..n {
                next[(i, i)] += &coeffs[n - k + 1];
            }
            let am = self * &next;
            let mut tr = Rational::zero();
            for i in 0..n {
                tr += &am[(i, i)];
            }
            coeffs[n - k] = -tr / q(k as i64);
            m = next;
        }
        coeffs
    }
}

impl Mul for &QMatrix {
    type Output = QMatrix;
    fn mul(self, rhs: &QMatrix) -> QMatrix {
        self.try_mul(rhs).expect("matrix dimensions agree")
    }
}

fn eval_poly(coeffs: &[Rational], x: &Rational) -> Rational {
    let mut acc = Rational::zero();
    for cf in coeffs.iter().rev() {
        acc = acc * x + cf;
    }
    acc
}

/// Divides by (x − r), assuming r is a root.
fn deflate(coeffs: &[Rational], r: &Rational) -> Vec<Rational> {
    let n = coeffs.len() - 1;
    let mut out = vec![Rational::zero(); n];
    let mut carry = Rational::zero();
    for k in (1..=n).rev() {
        carry = &coeffs[k] + carry * r;
        out[k - 1] = carry.clone();
    }
    out
}

/// Continued-fraction convergents of `x` with denominators up to `max_den`.
fn convergents(x: f64, max_den: i64) -> Vec<Rational> {
    let mut out = Vec::new();
    let (mut h0, mut h1) = (BigInt::zero(), BigInt::one());
    let (mut k0, mut k1) = (BigInt::one(), BigInt::zero());
    let mut v = x;
    for _ in 0..64 {
        if !v.is_finite() || v.abs() > 1e18 {
            break;
        }
        let a = v.floor();
        let ai = BigInt::from(a as i64);
        let h2 = &ai * &h1 + &h0;
        let k2 = &ai * &k1 + &k0;
        if k2 > BigInt::from(max_den) {
            break;
        }
        out.push(Rational::new(h2.clone(), k2.clone()));
        h0 = std::mem::replace(&mut h1, h2);
        k0 = std::mem::replace(&mut k1, k2);
        let frac = v - a;
        if frac.abs() < 1e-15 {
            break;
        }
        v = 1.0 / frac;
    }
    out
}

/// Rational eigen decomposition of a diagonalizable matrix with rational
/// spectrum.
#[derive(Clone, Debug)]
pub struct ExactEigen {
    /// Sorted by modulus descending, positive before negative on ties.
    pub eigenvalues: Vec<Rational>,
    /// Eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: QMatrix,
}

/// Returns `None` when some eigenvalue is irrational or complex, or when
/// the matrix is not diagonalizable.
pub fn exact_eigen(a: &QMatrix) -> Option<ExactEigen> {
    if !a.is_square() {
        return None;
    }
    let n = a.nrows();
    let mut poly = a.characteristic_polynomial();
    let lcm = poly
        .iter()
        .fold(BigInt::one(), |acc, cf| num_integer::Integer::lcm(&acc, cf.denom()));
    let max_den = lcm.to_i64().unwrap_or(i64::MAX).min(1 << 40);
    let float = eigen_decomposition(&a.to_complex()).ok()?;

    let mut roots: Vec<Rational> = Vec::new();
    for z in &float.eigenvalues {
        if z.im.abs() > 1e-6 * (1.0 + z.re.abs()) {
            return None;
        }
        let found = convergents(z.re, max_den)
            .into_iter()
            .rev()
            .find(|r| eval_poly(&poly, r).is_zero());
        if let Some(r) = found {
            roots.push(r.clone());
            poly = deflate(&poly, &r);
        }
    }
    if roots.len() != n {
        return None;
    }

    roots.sort_by(|x, y| {
        y.abs()
            .cmp(&x.abs())
            .then_with(|| y.is_positive().cmp(&x.is_positive()))
    });
    let mut columns = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let lambda = roots[i].clone();
        let mult = roots[i..].iter().take_while(|r| **r == lambda).count();
        let shifted = a.sub(&QMatrix::identity(n).scale(&lambda));
        let ker = shifted.nullspace();
        if ker.len() != mult {
            return None;
        }
        columns.extend(ker);
        i += mult;
    }
    Some(ExactEigen {
        eigenvalues: roots,
        eigenvectors: QMatrix::from_columns(n, &columns),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_q() -> impl Strategy<Value = Rational> {
        (-20i64..20, 1i64..9).prop_map(|(n, d)| qf(n, d))
    }

    fn arb_qmat(n: usize) -> impl Strategy<Value = QMatrix> {
        proptest::collection::vec(arb_q(), n * n).prop_map(move |v| QMatrix::new(n, n, v).unwrap())
    }

    proptest! {
        #[test]
        fn product_is_associative(a in arb_qmat(4), b in arb_qmat(4), cm in arb_qmat(4)) {
            prop_assert_eq!(&(&a * &b) * &cm, &a * &(&b * &cm));
        }

        #[test]
        fn determinant_is_multiplicative(a in arb_qmat(3), b in arb_qmat(3)) {
            let lhs = (&a * &b).determinant().unwrap();
            let rhs = a.determinant().unwrap() * b.determinant().unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn inverse_roundtrip(a in arb_qmat(3)) {
            match a.inverse() {
                Ok(inv) => prop_assert_eq!(&a * &inv, QMatrix::identity(3)),
                Err(_) => prop_assert!(a.determinant().unwrap().is_zero()),
            }
        }
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("3/4").unwrap(), qf(3, 4));
        assert_eq!(parse_rational("-2").unwrap(), q(-2));
        assert_eq!(parse_rational("0.25").unwrap(), qf(1, 4));
        assert_eq!(parse_rational("-1.5").unwrap(), qf(-3, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert_eq!(format_rational(&qf(6, 4)), "3/2");
    }

    #[test]
    fn rank_and_nullspace() {
        let m = QMatrix::from_i64(3, 3, &[1, 2, 3, 2, 4, 6, 1, 0, 1]);
        assert_eq!(m.rank(), 2);
        let ker = m.nullspace();
        assert_eq!(ker.len(), 1);
        assert!(m.mul_vec(&ker[0]).iter().all(|x| x.is_zero()));
    }

    #[test]
    fn charpoly_of_companion() {
        let m = QMatrix::from_i64(2, 2, &[0, 1, 1, 1]);
        assert_eq!(m.characteristic_polynomial(), vec![q(-1), q(-1), q(1)]);
    }

    #[test]
    fn exact_eigen_rational_spectrum() {
        let m = QMatrix::from_i64(2, 2, &[2, 1, 0, 3]);
        let e = exact_eigen(&m).unwrap();
        assert_eq!(e.eigenvalues, vec![q(3), q(2)]);
        let lhs = &m * &e.eigenvectors;
        let rhs = &e.eigenvectors * &QMatrix::diagonal(&e.eigenvalues);
        assert_eq!(lhs, rhs);
        assert!(exact_eigen(&QMatrix::from_i64(2, 2, &[0, 1, 1, 1])).is_none());
        assert!(exact_eigen(&QMatrix::from_i64(2, 2, &[1, 1, 0, 1])).is_none());
        let e = exact_eigen(&QMatrix::diagonal(&[qf(1, 3), qf(-1, 3), qf(7, 2)])).unwrap();
        assert_eq!(e.eigenvalues, vec![qf(7, 2), qf(1, 3), qf(-1, 3)]);
    }
}
