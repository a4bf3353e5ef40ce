//! Step-length schedules, partial sums `α_{i:j}` and the separator index.
//!
//! Indices in this module's public API are 1-based: `partial_sum(1, n)` is
//! the total step mass and `separator` returns a value in `1..=n`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dd::Dd;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("step schedule must contain at least one step")]
    Empty,
    #[error("step length at index {index} must be positive and finite, got {value}")]
    NonPositive { index: usize, value: f64 },
    #[error("partial sum indices ({i}, {j}) out of range for a schedule of length {n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("schedule length {got} does not match expected length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("malformed schedule: {0}")]
    Parse(String),
}

#[derive(Deserialize)]
struct RawSchedule {
    alphas: Vec<f64>,
}

/// Positive step lengths `α_1, …, α_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct StepSchedule {
    alphas: Vec<f64>,
    #[serde(skip)]
    prefix: Vec<Dd>,
}

impl TryFrom<RawSchedule> for StepSchedule {
    type Error = ScheduleError;
    fn try_from(raw: RawSchedule) -> Result<Self, Self::Error> {
        StepSchedule::new(raw.alphas)
    }
}

impl StepSchedule {
    pub fn new(alphas: Vec<f64>) -> Result<Self, ScheduleError> {
        if alphas.is_empty() {
            return Err(ScheduleError::Empty);
        }
        if let Some((k, &v)) = alphas
            .iter()
            .enumerate()
            .find(|(_, &a)| !(a > 0.0 && a.is_finite()))
        {
            return Err(ScheduleError::NonPositive { index: k + 1, value: v });
        }
        let mut prefix = Vec::with_capacity(alphas.len() + 1);
        let mut acc = Dd::ZERO;
        prefix.push(acc);
        for &a in &alphas {
            acc += Dd::new(a);
            prefix.push(acc);
        }
        Ok(Self { alphas, prefix })
    }

    /// Constant schedule `(alpha, …, alpha)` of length `n`.
    pub fn constant(n: usize, alpha: f64) -> Result<Self, ScheduleError> {
        Self::new(vec![alpha; n])
    }

    /// `n` steps drawn uniformly from `(0, 1]`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, ScheduleError> {
        Self::new((0..n).map(|_| 1.0 - rng.random::<f64>()).collect())
    }

    /// Parses a comma separated list such as `"1,0.5,2"`.
    pub fn parse_list(s: &str) -> Result<Self, ScheduleError> {
        let alphas = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .enumerate()
            .map(|(k, t)| {
                t.parse::<f64>()
                    .map_err(|e| ScheduleError::Parse(format!("entry {}: {t:?}: {e}", k + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(alphas)
    }

    pub fn from_json(s: &str) -> Result<Self, ScheduleError> {
        serde_json::from_str(s).map_err(|e| {
            // surface the validation error from try_from unchanged when possible
            ScheduleError::Parse(e.to_string())
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schedule serializes")
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `α_i`, 1-based.
    #[inline]
    pub fn alpha(&self, i: usize) -> f64 {
        self.alphas[i - 1]
    }

    pub fn alpha_dd(&self, i: usize) -> Dd {
        Dd::new(self.alphas[i - 1])
    }

    /// Total step mass `α_{1:N}`.
    pub fn total(&self) -> f64 {
        self.prefix[self.len()].to_f64()
    }

    /// `α_{i:j} = Σ_{k=i}^{j} α_k`, or 0 when `i > j`.
    ///
    /// Accepts `1 <= i <= N + 1` and `j <= N`.
    pub fn partial_sum(&self, i: usize, j: usize) -> Result<f64, ScheduleError> {
        self.partial_sum_dd(i, j).map(Dd::to_f64)
    }

    /// Same as [`partial_sum`](Self::partial_sum) in double-double precision.
    pub fn partial_sum_dd(&self, i: usize, j: usize) -> Result<Dd, ScheduleError> {
        let n = self.len();
        if i == 0 || i > n + 1 || j > n {
            return Err(ScheduleError::IndexOutOfRange { i, j, n });
        }
        Ok(self.sum_dd(i, j))
    }

    // unchecked; callers stay inside the documented range
    #[inline]
    pub(crate) fn sum_dd(&self, i: usize, j: usize) -> Dd {
        if i > j {
            Dd::ZERO
        } else {
            self.prefix[j] - self.prefix[i - 1]
        }
    }

    /// The unique `s` with `α_{1:s} > α_{s+1:N}` and `α_{1:s-1} <= α_{s:N}`.
    pub fn separator(&self) -> Separator {
        let n = self.len();
        let total = self.prefix[n];
        // α_{1:s} > α_{s+1:N} is monotone in s, so the first hit is the separator
        let s = (1..=n)
            .find(|&s| self.prefix[s] > total - self.prefix[s])
            .expect("α_{1:N} > α_{N+1:N} = 0 always holds");
        Separator { s }
    }
}

/// Which of the three sum-of-squares displays applies to a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SosCase {
    /// `s = 1` and `N >= 2`
    I,
    /// `2 <= s <= N - 1`
    II,
    /// `s = N`
    III,
}

/// Separator index `s`, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Separator {
    s: usize,
}

impl Separator {
    #[inline]
    pub fn index(self) -> usize {
        self.s
    }

    /// Case selection for a schedule of length `n`. `N = 1` falls in case III.
    pub fn case(self, n: usize) -> SosCase {
        if self.s == n {
            SosCase::III
        } else if self.s == 1 {
            SosCase::I
        } else {
            SosCase::II
        }
    }

    /// Checks both defining inequalities against `sched`.
    pub fn satisfies(self, sched: &StepSchedule) -> bool {
        let n = sched.len();
        let s = self.s;
        (1..=n).contains(&s)
            && sched.sum_dd(1, s) > sched.sum_dd(s + 1, n)
            && sched.sum_dd(1, s - 1) <= sched.sum_dd(s, n)
    }
}

impl std::fmt::Display for Separator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "s={}", self.s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assume, proptest};

    fn sched(a: &[f64]) -> StepSchedule {
        StepSchedule::new(a.to_vec()).unwrap()
    }

    #[test]
    fn partial_sum_examples() {
        let s = sched(&[1.0, 2.0, 3.0]);
        assert_eq!(s.partial_sum(1, 3).unwrap(), 6.0);
        assert_eq!(s.partial_sum(3, 2).unwrap(), 0.0);
        assert_eq!(s.partial_sum(4, 3).unwrap(), 0.0);
        assert_eq!(sched(&[0.5]).partial_sum(1, 1).unwrap(), 0.5);
    }

    #[test]
    fn partial_sum_domain_errors() {
        let s = sched(&[1.0, 2.0, 3.0]);
        assert!(matches!(s.partial_sum(0, 2), Err(ScheduleError::IndexOutOfRange { .. })));
        assert!(matches!(s.partial_sum(5, 3), Err(ScheduleError::IndexOutOfRange { .. })));
        assert!(matches!(s.partial_sum(1, 4), Err(ScheduleError::IndexOutOfRange { .. })));
    }

    #[test]
    fn separator_examples() {
        // values from a direct scan of both inequalities
        assert_eq!(sched(&[5.0, 1.0, 1.0]).separator().index(), 1);
        assert_eq!(sched(&[1.0, 1.0, 1.0, 1.0]).separator().index(), 3);
        assert_eq!(sched(&[1.0, 1.0, 5.0]).separator().index(), 3);
        assert_eq!(sched(&[2.0]).separator().index(), 1);
        assert_eq!(sched(&[1.0, 1.0]).separator().index(), 2);
    }

    #[test]
    fn rejects_bad_schedules() {
        assert_eq!(StepSchedule::new(vec![]), Err(ScheduleError::Empty));
        assert_eq!(
            StepSchedule::new(vec![1.0, 0.0, 2.0]),
            Err(ScheduleError::NonPositive { index: 2, value: 0.0 })
        );
        assert!(matches!(
            StepSchedule::new(vec![1.0, f64::NAN]),
            Err(ScheduleError::NonPositive { index: 2, .. })
        ));
    }

    #[test]
    fn json_schema() {
        let s = StepSchedule::from_json(r#"{"alphas": [1.0, 0.5]}"#).unwrap();
        assert_eq!(s.alphas(), &[1.0, 0.5]);
        assert_eq!(s.to_json(), r#"{"alphas":[1.0,0.5]}"#);
        let err = StepSchedule::from_json(r#"{"alphas": [1.0, -2.0, 3.0]}"#).unwrap_err();
        assert!(err.to_string().contains("index 2"), "{err}");
        let err = StepSchedule::from_json(r#"{"alphas": []}"#).unwrap_err();
        assert!(err.to_string().contains("at least one"), "{err}");
    }

    #[test]
    fn parse_list_accepts_spaces() {
        let s = StepSchedule::parse_list("1, 2 ,3").unwrap();
        assert_eq!(s.alphas(), &[1.0, 2.0, 3.0]);
        assert!(StepSchedule::parse_list("1,x").is_err());
    }

    #[test]
    fn case_selection() {
        assert_eq!(sched(&[1.0]).separator().case(1), SosCase::III);
        assert_eq!(sched(&[5.0, 1.0, 1.0]).separator().case(3), SosCase::I);
        assert_eq!(sched(&[1.0, 1.0, 1.0, 1.0]).separator().case(4), SosCase::II);
        assert_eq!(sched(&[1.0, 1.0]).separator().case(2), SosCase::III);
    }

    // Brute force: count every index satisfying both defining inequalities,
    // with sums recomputed naively from scratch.
    fn brute_force_separators(a: &[f64]) -> Vec<usize> {
        let n = a.len();
        let sum = |i: usize, j: usize| -> f64 {
            if i > j {
                0.0
            } else {
                a[i - 1..j].iter().sum()
            }
        };
        (1..=n)
            .filter(|&s| sum(1, s) > sum(s + 1, n) && sum(1, s - 1) <= sum(s, n))
            .collect()
    }

    #[test]
    fn separator_matches_brute_force_on_random_schedules() {
        use rand::SeedableRng;
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(2024);
        for _ in 0..10_000 {
            let n = rng.random_range(1..=30);
            // dyadic steps keep the naive f64 sums exact so the brute force is trustworthy
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(1..=64) as f64 / 64.0).collect();
            let s = sched(&a);
            let sep = s.separator();
            assert!(sep.satisfies(&s));
            assert_eq!(brute_force_separators(&a), vec![sep.index()], "{a:?}");
        }
        for _ in 0..10_000 {
            let n = rng.random_range(1..=30);
            let s = StepSchedule::random(n, &mut rng).unwrap();
            let sep = s.separator();
            assert!(sep.satisfies(&s));
            let k = sep.index();
            for i in 1..=n {
                if i >= k {
                    assert!(s.sum_dd(1, i) > s.sum_dd(i + 1, n));
                } else {
                    assert!(s.sum_dd(1, i) <= s.sum_dd(i + 1, n));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn partial_sums_are_additive(
            a in prop::collection::vec(0.01f64..10.0, 1..30),
            picks in (0usize..1000, 0usize..1000, 0usize..1000),
        ) {
            let s = sched(&a);
            let n = a.len();
            let mut idx = [picks.0 % n + 1, picks.1 % n + 1, picks.2 % n + 1];
            idx.sort();
            let (i, j, k) = (idx[0], idx[1], idx[2]);
            prop_assume!(j < k);
            let lhs = s.partial_sum(i, j).unwrap() + s.partial_sum(j + 1, k).unwrap();
            let rhs = s.partial_sum(i, k).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }
}
