//! The performance-estimation problem for PPA in Gram-matrix form.
//!
//! Variables are the Gram matrix `G = PᵀP` of `P = [x_0, …, x_N]` (indices
//! `0..=N`) and the vector `F = (f_1, …, f_N)`. The minimizer is pinned at the
//! origin with `f(x*) = 0`, and `g_i = (x_{i−1} − x_i)/α_i` is substituted
//! everywhere, so every constraint is linear in `(G, F)`:
//!
//! | tag            | constraint                                   |
//! |----------------|----------------------------------------------|
//! | `Radius`       | `‖x_0‖² <= R²`                               |
//! | `FNonneg(i)`   | `f_i >= 0`                                   |
//! | `AtOpt(i)`     | `0 >= f_i + ⟨g_i, −x_i⟩`                     |
//! | `Cross(i, j)`  | `f_j >= f_i + ⟨g_i, x_j − x_i⟩`, `i != j`    |
//!
//! The objective is `‖g_N‖² = ‖x_{N−1} − x_N‖²/α_N²`, maximized.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::ppa::Trajectory;
use crate::schedule::StepSchedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PepError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("trajectory has no known minimizer; the instance pins x* at the origin")]
    MissingMinimizer,
    #[error("invalid constraint id {0:?}")]
    BadConstraintId(String),
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
}

/// Identity of a constraint, indices 1-based for iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ConstraintId {
    Radius,
    FNonneg(usize),
    AtOpt(usize),
    /// `f_j >= f_i + ⟨g_i, x_j − x_i⟩` written as `Cross(i, j)`.
    Cross(usize, usize),
    /// Constraint of a hand-built instance that is not a PEP row.
    Aux(usize),
}

impl ConstraintId {
    /// Rows that survive the inactive-constraint reduction.
    pub fn kept_by_reduction(self, n: usize) -> bool {
        match self {
            ConstraintId::FNonneg(i) => i == n,
            ConstraintId::Cross(i, j) => i.abs_diff(j) < 2,
            _ => true,
        }
    }
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintId::Radius => write!(f, "radius"),
            ConstraintId::FNonneg(i) => write!(f, "f_nonneg({i})"),
            ConstraintId::AtOpt(i) => write!(f, "at_opt({i})"),
            ConstraintId::Cross(i, j) => write!(f, "cross({i},{j})"),
            ConstraintId::Aux(i) => write!(f, "aux({i})"),
        }
    }
}

impl FromStr for ConstraintId {
    type Err = PepError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PepError::BadConstraintId(s.to_string());
        let s = s.trim();
        if s == "radius" {
            return Ok(ConstraintId::Radius);
        }
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args = rest.strip_suffix(')').ok_or_else(bad)?;
        let nums = args
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?;
        match (name, nums.as_slice()) {
            ("f_nonneg", [i]) => Ok(ConstraintId::FNonneg(*i)),
            ("at_opt", [i]) => Ok(ConstraintId::AtOpt(*i)),
            ("cross", [i, j]) if i != j => Ok(ConstraintId::Cross(*i, *j)),
            ("aux", [i]) => Ok(ConstraintId::Aux(*i)),
            _ => Err(bad()),
        }
    }
}

impl From<ConstraintId> for String {
    fn from(id: ConstraintId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for ConstraintId {
    type Error = PepError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Symmetric coefficient matrix `M` of the form `Σ M_ij ⟨x_i, x_j⟩ = ⟨M, G⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuadForm {
    m: Matrix,
}

impl QuadForm {
    pub fn zeros(n: usize) -> Self {
        Self { m: Matrix::zeros(n, n) }
    }

    /// Symmetrizes the input.
    pub fn from_matrix(m: &Matrix) -> Self {
        Self { m: m.symmetrized() }
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    /// Adds `w ⟨u, v⟩` for `u, v` given as sparse combinations of iterates.
    pub fn add_inner(&mut self, w: f64, u: &[(usize, f64)], v: &[(usize, f64)]) {
        for &(i, a) in u {
            for &(j, b) in v {
                let t = 0.5 * w * a * b;
                self.m[(i, j)] += t;
                self.m[(j, i)] += t;
            }
        }
    }

    pub fn scaled(&self, s: f64) -> QuadForm {
        QuadForm { m: self.m.scale(s) }
    }

    /// `⟨M, G⟩`
    pub fn evaluate(&self, gram: &Matrix) -> f64 {
        self.m.frobenius_dot(gram)
    }

    /// Nonzero entries `(i, j, M_ij)` over the full matrix.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let n = self.dim();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = self.m[(i, j)];
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

/// `⟨quad, G⟩ + linᵀF  sense  rhs`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub tag: ConstraintId,
    pub quad: QuadForm,
    pub lin: Vec<f64>,
    pub rhs: f64,
    pub sense: Sense,
}

impl Constraint {
    pub fn lhs(&self, gram: &Matrix, fvec: &[f64]) -> f64 {
        self.quad.evaluate(gram) + crate::linalg::dot(&self.lin, fvec)
    }

    /// Nonnegative when satisfied; for equalities, minus the absolute residual.
    pub fn slack(&self, gram: &Matrix, fvec: &[f64]) -> f64 {
        let lhs = self.lhs(gram, fvec);
        match self.sense {
            Sense::Le => self.rhs - lhs,
            Sense::Ge => lhs - self.rhs,
            Sense::Eq => -(lhs - self.rhs).abs(),
        }
    }
}

/// A maximization SDP over `G ⪰ 0` (order `gram_dim`) and free `F` (length
/// `fvec_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpInstance {
    pub gram_dim: usize,
    pub fvec_dim: usize,
    pub objective: QuadForm,
    pub objective_lin: Vec<f64>,
    pub constraints: Vec<Constraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "R")]
    pub radius: Option<f64>,
}

impl SdpInstance {
    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn tags(&self) -> Vec<ConstraintId> {
        self.constraints.iter().map(|c| c.tag).collect()
    }

    pub fn constraint(&self, id: ConstraintId) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.tag == id)
    }

    pub fn objective_value(&self, gram: &Matrix, fvec: &[f64]) -> f64 {
        self.objective.evaluate(gram) + crate::linalg::dot(&self.objective_lin, fvec)
    }

    /// Copy without the listed constraints.
    pub fn without(&self, drop: &[ConstraintId]) -> SdpInstance {
        let mut out = self.clone();
        out.constraints.retain(|c| !drop.contains(&c.tag));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

fn e(i: usize) -> Vec<(usize, f64)> {
    vec![(i, 1.0)]
}

// g_i = (x_{i−1} − x_i)/α_i as a sparse combination
fn subgradient(sched: &StepSchedule, i: usize) -> Vec<(usize, f64)> {
    let a = sched.alpha(i);
    vec![(i - 1, 1.0 / a), (i, -1.0 / a)]
}

/// Full PEP instance: `1 + N + N + N(N−1)` constraints.
pub fn build_pep(sched: &StepSchedule, radius: f64) -> Result<SdpInstance, PepError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(PepError::InvalidRadius(radius));
    }
    let n = sched.len();
    let dim = n + 1;
    let unit_f = |i: usize, s: f64| {
        let mut v = vec![0.0; n];
        v[i - 1] = s;
        v
    };

    let mut objective = QuadForm::zeros(dim);
    let g_n = subgradient(sched, n);
    objective.add_inner(1.0, &g_n, &g_n);

    let mut constraints = Vec::with_capacity(1 + 2 * n + n * (n - 1));
    let mut radius_q = QuadForm::zeros(dim);
    radius_q.add_inner(1.0, &e(0), &e(0));
    constraints.push(Constraint {
        tag: ConstraintId::Radius,
        quad: radius_q,
        lin: vec![0.0; n],
        rhs: radius * radius,
        sense: Sense::Le,
    });
    for i in 1..=n {
        constraints.push(Constraint {
            tag: ConstraintId::FNonneg(i),
            quad: QuadForm::zeros(dim),
            lin: unit_f(i, 1.0),
            rhs: 0.0,
            sense: Sense::Ge,
        });
    }
    for i in 1..=n {
        // f_i + ⟨g_i, −x_i⟩ <= 0
        let mut q = QuadForm::zeros(dim);
        q.add_inner(1.0, &subgradient(sched, i), &[(i, -1.0)]);
        constraints.push(Constraint {
            tag: ConstraintId::AtOpt(i),
            quad: q,
            lin: unit_f(i, 1.0),
            rhs: 0.0,
            sense: Sense::Le,
        });
    }
    for i in 1..=n {
        for j in 1..=n {
            if i == j {
                continue;
            }
            // f_j − f_i − ⟨g_i, x_j − x_i⟩ >= 0
            let mut q = QuadForm::zeros(dim);
            q.add_inner(-1.0, &subgradient(sched, i), &[(j, 1.0), (i, -1.0)]);
            let mut lin = vec![0.0; n];
            lin[j - 1] = 1.0;
            lin[i - 1] = -1.0;
            constraints.push(Constraint {
                tag: ConstraintId::Cross(i, j),
                quad: q,
                lin,
                rhs: 0.0,
                sense: Sense::Ge,
            });
        }
    }
    Ok(SdpInstance {
        gram_dim: dim,
        fvec_dim: n,
        objective,
        objective_lin: vec![0.0; n],
        constraints,
        alphas: Some(sched.alphas().to_vec()),
        radius: Some(radius),
    })
}

/// Drops `FNonneg(i)` for `i < N` and `Cross(i, j)` with `|i − j| >= 2`,
/// leaving `3N` constraints.
pub fn reduce_pep(inst: &SdpInstance) -> SdpInstance {
    let n = inst.fvec_dim;
    let mut out = inst.clone();
    out.constraints.retain(|c| c.tag.kept_by_reduction(n));
    out
}

/// The tags removed by [`reduce_pep`] for a schedule of length `n`.
pub fn reduction_drop_set(n: usize) -> Vec<ConstraintId> {
    let mut out: Vec<ConstraintId> = (1..n).map(ConstraintId::FNonneg).collect();
    for i in 1..=n {
        for j in 1..=n {
            if i.abs_diff(j) >= 2 {
                out.push(ConstraintId::Cross(i, j));
            }
        }
    }
    out
}

/// Gram matrix and function values of a trajectory, translated so that the
/// minimizer sits at the origin with value 0, under the trajectory's metric.
pub fn trajectory_gram(traj: &Trajectory) -> Result<(Matrix, Vec<f64>), PepError> {
    let (xs, fs) = match (&traj.x_star, traj.f_star) {
        (Some(x), Some(f)) => (x, f),
        _ => return Err(PepError::MissingMinimizer),
    };
    let shifted: Vec<Vec<f64>> = traj
        .x
        .iter()
        .map(|x| x.iter().zip(xs).map(|(a, b)| a - b).collect())
        .collect();
    let k = shifted.len();
    let gram = Matrix::from_fn(k, k, |i, j| traj.metric.inner(&shifted[i], &shifted[j]));
    let fvec = traj.f.iter().map(|f| f - fs).collect();
    Ok((gram.symmetrized(), fvec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSlack {
    pub tag: ConstraintId,
    pub slack: f64,
}

/// Slack of every constraint at `(G, F)`.
pub fn evaluate_slacks(inst: &SdpInstance, gram: &Matrix, fvec: &[f64]) -> Result<Vec<ConstraintSlack>, PepError> {
    if gram.rows() != inst.gram_dim || gram.cols() != inst.gram_dim || fvec.len() != inst.fvec_dim {
        return Err(PepError::DimensionMismatch(format!(
            "instance expects G of order {} and F of length {}, got {}x{} and {}",
            inst.gram_dim,
            inst.fvec_dim,
            gram.rows(),
            gram.cols(),
            fvec.len()
        )));
    }
    Ok(inst
        .constraints
        .iter()
        .map(|c| ConstraintSlack {
            tag: c.tag,
            slack: c.slack(gram, fvec),
        })
        .collect())
}

/// Slack of every constraint at the Gram data of `traj`. A slack below
/// `−tol` marks the trajectory as infeasible for the instance.
pub fn evaluate_feasibility(inst: &SdpInstance, traj: &Trajectory) -> Result<Vec<ConstraintSlack>, PepError> {
    if traj.steps() != inst.fvec_dim {
        return Err(PepError::DimensionMismatch(format!(
            "instance has N = {}, trajectory has {} steps",
            inst.fvec_dim,
            traj.steps()
        )));
    }
    let (gram, fvec) = trajectory_gram(traj)?;
    evaluate_slacks(inst, &gram, &fvec)
}

pub fn is_feasible(slacks: &[ConstraintSlack], tol: f64) -> bool {
    slacks.iter().all(|s| s.slack >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppa::{run_ppa, Metric, Quadratic, ScaledL1};

    fn sched(a: &[f64]) -> StepSchedule {
        StepSchedule::new(a.to_vec()).unwrap()
    }

    #[test]
    fn single_step_instance() {
        let inst = build_pep(&sched(&[1.0]), 1.0).unwrap();
        assert_eq!(inst.len(), 3);
        let r = inst.constraint(ConstraintId::Radius).unwrap();
        assert_eq!(r.quad.get(0, 0), 1.0);
        assert_eq!(r.rhs, 1.0);
        assert_eq!(r.sense, Sense::Le);
        assert_eq!(inst.constraint(ConstraintId::FNonneg(1)).unwrap().lin, vec![1.0]);
        // 0 >= f_1 − G01 + G11
        let a = inst.constraint(ConstraintId::AtOpt(1)).unwrap();
        assert_eq!(a.sense, Sense::Le);
        assert_eq!(a.lin, vec![1.0]);
        assert_eq!(a.quad.get(0, 1) + a.quad.get(1, 0), -1.0);
        assert_eq!(a.quad.get(1, 1), 1.0);
        assert_eq!(a.quad.get(0, 0), 0.0);
    }

    #[test]
    fn constraint_counts() {
        for n in 1..=6 {
            let s = StepSchedule::constant(n, 1.0).unwrap();
            let full = build_pep(&s, 1.0).unwrap();
            assert_eq!(full.len(), 1 + n + n + n * (n - 1));
            assert_eq!(reduce_pep(&full).len(), 3 * n);
            assert_eq!(full.without(&reduction_drop_set(n)).len(), 3 * n);
        }
        assert_eq!(build_pep(&sched(&[1.0, 1.0]), 1.0).unwrap().len(), 7);
        // 31 rows for N = 5, of which 4 nonneg and 12 cross rows are dropped
        assert_eq!(build_pep(&StepSchedule::constant(5, 1.0).unwrap(), 1.0).unwrap().len(), 31);
    }

    #[test]
    fn objective_expansion() {
        let inst = build_pep(&sched(&[1.0, 1.0]), 1.0).unwrap();
        let m = inst.objective.matrix();
        assert_eq!(m[(1, 1)], 1.0);
        assert_eq!(m[(2, 2)], 1.0);
        assert_eq!(m[(1, 2)], -1.0);
        assert_eq!(m[(2, 1)], -1.0);
        assert_eq!(m[(0, 0)], 0.0);
        assert!(inst.objective.matrix().asymmetry() == 0.0);
        for c in &inst.constraints {
            assert_eq!(c.quad.matrix().asymmetry(), 0.0);
        }
    }

    #[test]
    fn worst_case_trajectory_is_active() {
        let s = sched(&[1.0, 1.0]);
        let f = ScaledL1::new(0.5, 1).unwrap();
        let t = run_ppa(&f, &s, &[-1.0], &Metric::identity(1), 1.0).unwrap();
        let red = reduce_pep(&build_pep(&s, 1.0).unwrap());
        for sl in evaluate_feasibility(&red, &t).unwrap() {
            assert!(sl.slack.abs() <= 1e-12, "{:?}", sl);
        }
    }

    #[test]
    fn quadratic_trajectory_nonneg_slacks() {
        let s = sched(&[1.0, 1.0, 1.0]);
        let f = Quadratic::half_squared_norm(1);
        let t = run_ppa(&f, &s, &[1.0], &Metric::identity(1), 1.0).unwrap();
        let full = build_pep(&s, 1.0).unwrap();
        let slacks = evaluate_feasibility(&full, &t).unwrap();
        assert!(is_feasible(&slacks, 1e-12));
        let get = |id| slacks.iter().find(|s| s.tag == id).unwrap().slack;
        assert!(get(ConstraintId::FNonneg(1)) > 0.0);
        assert!(get(ConstraintId::FNonneg(2)) > 0.0);
    }

    #[test]
    fn zero_function_is_feasible() {
        let s = sched(&[0.4, 0.9]);
        let f = Quadratic::new(Matrix::zeros(1, 1), vec![0.0]).unwrap().with_minimizer(vec![0.0]);
        let t = run_ppa(&f, &s, &[0.7], &Metric::identity(1), 1.0).unwrap();
        let slacks = evaluate_feasibility(&build_pep(&s, 1.0).unwrap(), &t).unwrap();
        assert!(slacks.iter().all(|c| c.slack >= 0.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = ScaledL1::new(0.5, 1).unwrap();
        let t = run_ppa(&f, &sched(&[1.0, 1.0]), &[-1.0], &Metric::identity(1), 1.0).unwrap();
        let inst = build_pep(&sched(&[1.0]), 1.0).unwrap();
        assert!(matches!(evaluate_feasibility(&inst, &t), Err(PepError::DimensionMismatch(_))));
    }

    #[test]
    fn constraint_id_strings() {
        for id in [
            ConstraintId::Radius,
            ConstraintId::FNonneg(3),
            ConstraintId::AtOpt(1),
            ConstraintId::Cross(2, 5),
            ConstraintId::Aux(0),
        ] {
            assert_eq!(id.to_string().parse::<ConstraintId>().unwrap(), id);
        }
        assert!("cross(2,2)".parse::<ConstraintId>().is_err());
        assert!("nonsense".parse::<ConstraintId>().is_err());
    }

    #[test]
    fn instance_json_lists_dense_rows() {
        let inst = build_pep(&sched(&[1.0]), 1.0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&inst.to_json()).unwrap();
        let c = &v["constraints"][2];
        assert_eq!(c["tag"], "at_opt(1)");
        assert_eq!(c["sense"], "<=");
        assert_eq!(c["quad"], serde_json::json!([[0.0, -0.5], [-0.5, 1.0]]));
        let back: SdpInstance = serde_json::from_str(&inst.to_json()).unwrap();
        assert_eq!(back, inst);
    }
}
