//! Double-double arithmetic built on error-free transformations.
//!
//! The certificate checks compare quadratic forms whose entries can reach
//! 1e6 for short steps while the acceptance tolerances are absolute (1e-10).
//! Plain `f64` loses that margin to rounding alone, so multipliers, the
//! aggregated form and the sum-of-squares reconstruction are carried in
//! roughly 106-bit precision and only rounded when reported. The SDP solver
//! uses the same type for its Schur complement, whose condition number
//! outgrows `1/ε` near a degenerate optimum.

use std::cmp::Ordering;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    pub fn is_sign_negative(self) -> bool {
        self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0)
    }

    /// `a · b` for plain doubles, exact.
    #[inline]
    pub fn product(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    /// One Newton step on the `f64` root; NaN for negative input.
    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 { Dd::ZERO } else { Dd::new(f64::NAN) };
        }
        let r = self.hi.sqrt();
        let rr = Dd::product(r, r);
        let corr = (self - rr).to_f64() / (2.0 * r);
        let (hi, lo) = quick_two_sum(r, corr);
        Dd { hi, lo }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::new(x)
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, b.hi);
        let p2 = p2 + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::new(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::new(q2);
        let q3 = r.hi / b.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Dd { hi: q1, lo: q2 } + Dd::new(q3)
    }
}

impl AddAssign for Dd {
    fn add_assign(&mut self, b: Dd) {
        *self = *self + b;
    }
}

impl SubAssign for Dd {
    fn sub_assign(&mut self, b: Dd) {
        *self = *self - b;
    }
}

impl Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(iter: I) -> Dd {
        iter.fold(Dd::ZERO, |a, b| a + b)
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

/// Symmetric matrix with double-double entries, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct DdMatrix {
    n: usize,
    data: Vec<Dd>,
}

impl DdMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![Dd::ZERO; n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Dd {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: Dd) {
        let k = i * self.n + j;
        self.data[k] += v;
    }

    /// Adds `w · sym(u vᵀ)` for sparse vectors given as (index, coefficient).
    pub fn add_sym_outer(&mut self, w: Dd, u: &[(usize, Dd)], v: &[(usize, Dd)]) {
        let half = Dd::new(0.5);
        for &(i, ui) in u {
            for &(j, vj) in v {
                let t = w * ui * vj * half;
                self.add_to(i, j, t);
                self.add_to(j, i, t);
            }
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Dd) {
        self.data[i * self.n + j] = v;
    }

    pub fn matvec(&self, x: &[Dd]) -> Vec<Dd> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(a, b)| *a * *b).sum())
            .collect()
    }

    /// Lower-triangular factor; fails on a pivot that is not positive.
    pub fn cholesky(&self) -> Result<DdCholesky, crate::linalg::LinalgError> {
        let n = self.n;
        let mut l = vec![Dd::ZERO; n * n];
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                let v = l[j * n + k];
                d -= v * v;
            }
            if !(d.hi > 0.0) {
                return Err(crate::linalg::LinalgError::NotPositiveDefinite { pivot: j, value: d.to_f64() });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut v = self.get(i, j);
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = v / djj;
            }
        }
        Ok(DdCholesky { n, l })
    }

    pub fn to_f64(&self) -> crate::linalg::Matrix {
        crate::linalg::Matrix::from_fn(self.n, self.n, |i, j| self.get(i, j).to_f64())
    }

    /// Largest entrywise `|self - other|`, evaluated before rounding.
    pub fn max_abs_diff(&self, other: &DdMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs().to_f64())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct DdCholesky {
    n: usize,
    l: Vec<Dd>,
}

impl DdCholesky {
    pub fn solve(&self, b: &[Dd]) -> Vec<Dd> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut v = y[i];
            for k in 0..i {
                v -= self.l[i * n + k] * y[k];
            }
            y[i] = v / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in i + 1..n {
                v -= self.l[k * n + i] * y[k];
            }
            y[i] = v / self.l[i * n + i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_bits_lost_by_f64() {
        let big = Dd::new(1e16);
        let s = big + Dd::ONE - big;
        assert_eq!(s.to_f64(), 1.0);
        assert_eq!((1e16 + 1.0) - 1e16, 0.0);
    }

    #[test]
    fn division_is_exact_to_double_double() {
        let third = Dd::ONE / Dd::new(3.0);
        let back = third * Dd::new(3.0) - Dd::ONE;
        assert!(back.abs().to_f64() < 1e-31);
        let q = Dd::new(0.1) / Dd::new(0.7);
        let r = q * Dd::new(0.7) - Dd::new(0.1);
        assert!(r.abs().to_f64() < 1e-32);
    }

    #[test]
    fn ordering_and_sign() {
        let a = Dd::new(1.0) + Dd::new(1e-20);
        assert!(a > Dd::ONE);
        assert!((Dd::ONE - a).is_sign_negative());
        assert_eq!((-a).abs(), a);
    }

    #[test]
    fn sqrt_and_cholesky_reach_double_double_accuracy() {
        let two = Dd::new(2.0);
        let r = two.sqrt();
        assert!((r * r - two).abs().to_f64() < 1e-30);
        // Hilbert matrix of order 8 has condition number ~1.5e10
        let n = 8;
        let mut h = DdMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                h.set(i, j, Dd::ONE / Dd::new((i + j + 1) as f64));
            }
        }
        let x: Vec<Dd> = (0..n).map(|i| Dd::new(1.0 + i as f64)).collect();
        let b = h.matvec(&x);
        let got = h.cholesky().unwrap().solve(&b);
        for (g, e) in got.iter().zip(&x) {
            assert!((*g - *e).abs().to_f64() < 1e-18, "{:?}", g);
        }
    }
}
