//! The extremal l1 instance, its closed-form trajectory, and audits of which
//! PEP constraints are active there.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dd::Dd;
use crate::linalg::Matrix;
use crate::pep::{build_pep, evaluate_slacks, ConstraintId, PepError};
use crate::ppa::{Metric, PpaError, ScaledL1};
use crate::schedule::StepSchedule;
use crate::sdp::{self, SdpError};

/// Slack magnitude below which a constraint counts as active.
pub const ACTIVE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum WorstCaseError {
    #[error("{0}")]
    Ppa(#[from] PpaError),
    #[error("{0}")]
    Pep(#[from] PepError),
    #[error("{0}")]
    Sdp(#[from] SdpError),
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
}

/// `f(x) = √B R |x| / α_{1:N}` in one dimension, started at `x_0 = −R/√B`.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Instance {
    pub function: ScaledL1,
    pub x0: Vec<f64>,
    pub metric: Metric,
    pub radius: f64,
}

pub fn l1_instance(sched: &StepSchedule, radius: f64, b_scalar: f64) -> Result<L1Instance, WorstCaseError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(WorstCaseError::InvalidRadius(radius));
    }
    let metric = Metric::scalar(1, b_scalar)?;
    let root = b_scalar.sqrt();
    Ok(L1Instance {
        function: ScaledL1::new(root * radius / sched.total(), 1)?,
        x0: vec![-radius / root],
        metric,
        radius,
    })
}

/// `f(x) = R |x| / (2 α_{1:N})` from `x_0 = −R`, which stops at `−R/2` and
/// meets the function-value bound `R²/(4 α_{1:N})` with equality.
pub fn fvalue_extremal_instance(sched: &StepSchedule, radius: f64) -> Result<L1Instance, WorstCaseError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(WorstCaseError::InvalidRadius(radius));
    }
    Ok(L1Instance {
        function: ScaledL1::new(radius / (2.0 * sched.total()), 1)?,
        x0: vec![-radius],
        metric: Metric::identity(1),
        radius,
    })
}

/// Iterates and values of PPA on [`l1_instance`] with `B = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    /// `x_0, …, x_N`, with `x_i = −R α_{i+1:N}/α_{1:N}`
    pub p: Vec<f64>,
    /// `f(x_1), …, f(x_N)`, with `f(x_i) = R² α_{i+1:N}/α_{1:N}²`
    pub f: Vec<f64>,
}

impl ClosedForm {
    /// `|g_N| = |x_{N−1} − x_N|/α_N`
    pub fn final_residual(&self, sched: &StepSchedule) -> f64 {
        let n = sched.len();
        (self.p[n - 1] - self.p[n]).abs() / sched.alpha(n)
    }

    /// `G = p pᵀ`, of rank one.
    pub fn gram(&self) -> Matrix {
        Matrix::outer(&self.p, &self.p)
    }
}

pub fn closed_form_trajectory(sched: &StepSchedule, radius: f64) -> ClosedForm {
    let n = sched.len();
    let t = sched.sum_dd(1, n);
    let r = Dd::new(radius);
    let p = (0..=n).map(|i| (-r * sched.sum_dd(i + 1, n) / t).to_f64()).collect();
    let f = (1..=n)
        .map(|i| (r * r * sched.sum_dd(i + 1, n) / (t * t)).to_f64())
        .collect();
    ClosedForm { p, f }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub id: ConstraintId,
    pub slack: f64,
    pub active: bool,
    /// Kept by the `3N`-constraint reduction.
    pub reduced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivenessReport {
    pub alphas: Vec<f64>,
    #[serde(rename = "R")]
    pub radius: f64,
    pub entries: Vec<AuditEntry>,
}

impl ActivenessReport {
    pub fn entry(&self, id: ConstraintId) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn all_reduced_active(&self) -> bool {
        self.entries.iter().filter(|e| e.reduced).all(|e| e.active)
    }

    /// Every dropped constraint is satisfied (slack `>= −ACTIVE_TOL`).
    pub fn dropped_feasible(&self) -> bool {
        self.entries.iter().filter(|e| !e.reduced).all(|e| e.slack >= -ACTIVE_TOL)
    }

    /// Dropped constraints with slack above `ACTIVE_TOL`. On the l1 instance
    /// these are the `FNonneg(i)`, `i < N`; the dropped cross inequalities
    /// stay tight because `f` is linear between the iterates.
    pub fn dropped_strict(&self) -> usize {
        self.entries.iter().filter(|e| !e.reduced && e.slack > ACTIVE_TOL).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("audit serializes")
    }
}

/// Slack of every full-PEP constraint at the closed-form trajectory.
pub fn activeness_audit(sched: &StepSchedule, radius: f64) -> Result<ActivenessReport, WorstCaseError> {
    let n = sched.len();
    let inst = build_pep(sched, radius)?;
    let cf = closed_form_trajectory(sched, radius);
    let entries = evaluate_slacks(&inst, &cf.gram(), &cf.f)?
        .into_iter()
        .map(|s| AuditEntry {
            id: s.tag,
            slack: s.slack,
            active: s.slack.abs() <= ACTIVE_TOL,
            reduced: s.tag.kept_by_reduction(n),
        })
        .collect();
    Ok(ActivenessReport {
        alphas: sched.alphas().to_vec(),
        radius,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub value_full: f64,
    /// `+∞` when the instance without `drop` is unbounded.
    pub value_dropped: f64,
    pub dropped: Vec<ConstraintId>,
    pub tol: f64,
    pub same: bool,
}

impl ProbeOutcome {
    pub fn difference(&self) -> f64 {
        (self.value_full - self.value_dropped).abs()
    }
}

/// Solves the full PEP with and without `drop` and compares the optima.
/// A diverging solve on the relaxed instance is read as an unbounded value.
pub fn inactive_constraint_probe(
    sched: &StepSchedule,
    radius: f64,
    drop: &[ConstraintId],
    tol: f64,
    solver_tol: f64,
) -> Result<ProbeOutcome, WorstCaseError> {
    let full = build_pep(sched, radius)?;
    let value_full = sdp::solve(&full, solver_tol, sdp::DEFAULT_MAX_ITER)?.objective;
    let value_dropped = match sdp::solve(&full.without(drop), solver_tol, sdp::DEFAULT_MAX_ITER) {
        Ok(sol) => sol.objective,
        Err(SdpError::Diverged { .. }) => f64::INFINITY,
        Err(e) => return Err(e.into()),
    };
    let same = (value_full - value_dropped).abs() <= tol;
    Ok(ProbeOutcome {
        value_full,
        value_dropped,
        dropped: drop.to_vec(),
        tol,
        same,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pep::reduction_drop_set;
    use crate::ppa::{check_bounds, run_ppa, ProxFunction};
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn sched(a: &[f64]) -> StepSchedule {
        StepSchedule::new(a.to_vec()).unwrap()
    }

    #[test]
    fn instance_parameters() {
        let i = l1_instance(&sched(&[1.0, 1.0]), 1.0, 1.0).unwrap();
        assert_eq!((i.function.coeff(), i.x0[0]), (0.5, -1.0));
        let i = l1_instance(&sched(&[2.0]), 3.0, 1.0).unwrap();
        assert_eq!((i.function.coeff(), i.x0[0]), (1.5, -3.0));
        let i = l1_instance(&sched(&[1.0, 1.0]), 1.0, 4.0).unwrap();
        assert_eq!((i.function.coeff(), i.x0[0]), (1.0, -0.5));
        assert!(l1_instance(&sched(&[1.0]), 0.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_values() {
        let cf = closed_form_trajectory(&sched(&[1.0, 1.0]), 1.0);
        assert_eq!(cf.p, vec![-1.0, -0.5, 0.0]);
        assert_eq!(cf.f, vec![0.25, 0.0]);
        let s = sched(&[1.0, 2.0, 3.0]);
        let cf = closed_form_trajectory(&s, 1.0);
        for (a, b) in cf.p.iter().zip([-1.0, -5.0 / 6.0, -0.5, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in cf.f.iter().zip([5.0 / 36.0, 3.0 / 36.0, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((cf.final_residual(&s) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_ppa() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.random_range(1..=30);
            let s = StepSchedule::random(n, &mut rng).unwrap();
            let r = [0.5, 1.0, 3.0][rng.random_range(0..3)];
            let inst = l1_instance(&s, r, 1.0).unwrap();
            let traj = run_ppa(&inst.function, &s, &inst.x0, &inst.metric, r).unwrap();
            let cf = closed_form_trajectory(&s, r);
            for (x, p) in traj.x.iter().zip(&cf.p) {
                assert!((x[0] - p).abs() <= 1e-12, "{} vs {}", x[0], p);
            }
            for (a, b) in traj.f.iter().zip(&cf.f) {
                assert!((a - b).abs() <= 1e-12);
            }
            assert!((cf.final_residual(&s) - r / s.total()).abs() <= 1e-12);
        }
    }

    #[test]
    fn scalar_metric_instance_is_tight() {
        let s = sched(&[0.3, 0.9, 0.4]);
        let inst = l1_instance(&s, 2.0, 4.0).unwrap();
        let traj = run_ppa(&inst.function, &s, &inst.x0, &inst.metric, 2.0).unwrap();
        let rep = check_bounds(&traj).unwrap();
        assert!((rep.subgrad_norm - rep.subgrad_bound).abs() < 1e-12);
    }

    #[test]
    fn fvalue_instance_attains_bound() {
        let s = sched(&[0.5, 0.25, 1.0]);
        let inst = fvalue_extremal_instance(&s, 3.0).unwrap();
        let traj = run_ppa(&inst.function, &s, &inst.x0, &inst.metric, 3.0).unwrap();
        let rep = check_bounds(&traj).unwrap();
        assert!((rep.fval_gap - rep.fval_bound).abs() < 1e-12);
        assert_eq!(inst.function.kind(), "l1");
    }

    #[test]
    fn audit_unit_steps() {
        let rep = activeness_audit(&sched(&[1.0, 1.0, 1.0]), 1.0).unwrap();
        assert!(rep.all_reduced_active());
        assert!(rep.dropped_feasible());
        assert!(rep.entry(ConstraintId::FNonneg(1)).unwrap().slack > 0.0);
        assert!(rep.entry(ConstraintId::FNonneg(2)).unwrap().slack > 0.0);
        // f is linear along the negative half-line, so every cross inequality is tight
        assert!(rep.entry(ConstraintId::Cross(1, 3)).unwrap().slack.abs() <= ACTIVE_TOL);
        assert!(rep.entry(ConstraintId::Cross(3, 1)).unwrap().active);
        assert_eq!(rep.entry(ConstraintId::Radius).unwrap().slack, 0.0);
        assert_eq!(rep.entries.iter().filter(|e| e.reduced).count(), 9);
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(v["entries"][0]["id"], "radius");
    }

    #[test]
    fn audit_random_schedules() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(1..=12);
            let s = StepSchedule::random(n, &mut rng).unwrap();
            let rep = activeness_audit(&s, 1.0).unwrap();
            assert!(rep.all_reduced_active(), "{:?}", s.alphas());
            assert!(rep.dropped_feasible());
            assert_eq!(rep.dropped_strict(), n - 1);
            for id in reduction_drop_set(n) {
                let strict = !rep.entry(id).unwrap().active;
                assert_eq!(strict, matches!(id, ConstraintId::FNonneg(_)), "{id}");
            }
        }
    }

    #[test]
    fn closed_form_gram_rank_one() {
        let cf = closed_form_trajectory(&sched(&[0.2, 0.7, 0.1, 0.5]), 1.0);
        let eig = cf.gram().symmetric_eigen().unwrap();
        let big = eig.max();
        assert_eq!(eig.values.iter().filter(|v| v.abs() > 1e-12 * big).count(), 1);
    }

    #[test]
    fn probe_small_instances() {
        let s = sched(&[1.0, 0.5, 0.8]);
        let same = inactive_constraint_probe(&s, 1.0, &reduction_drop_set(3), 1e-7, 1e-9).unwrap();
        assert!(same.same, "{same:?}");
        let none = inactive_constraint_probe(&s, 1.0, &[], 1e-7, 1e-9).unwrap();
        assert!(none.same);
        let fnn = inactive_constraint_probe(&sched(&[1.0]), 1.0, &[ConstraintId::FNonneg(1)], 1e-7, 1e-9).unwrap();
        assert!(!fnn.same);
        assert!(fnn.value_dropped.is_infinite());
    }
}
