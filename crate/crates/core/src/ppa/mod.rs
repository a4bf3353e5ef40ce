//! The proximal point iteration under a general metric `B`.
//!
//! Each step `x_i = prox^B_{α_i f}(x_{i−1})` records the residual subgradient
//! `g_i = B(x_{i−1} − x_i)/α_i`, which belongs to `∂f(x_i)`. [`check_bounds`]
//! compares the final residual and function value against
//! `‖g_N‖_{B⁻¹} <= R/α_{1:N}` and `f(x_N) − f(x*) <= R²/(4 α_{1:N})`.

mod metric;
mod prox;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::{ScheduleError, StepSchedule};

pub use metric::Metric;
pub use prox::{BoxIndicator, MaxAffine, ProxFunction, Quadratic, ScaledL1};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PpaError {
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("invalid function: {0}")]
    InvalidFunction(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("step length must be positive, got {0}")]
    InvalidStep(f64),
    #[error("prox subproblem did not reach optimality (residual {residual:e})")]
    ProxNotConverged { residual: f64 },
    #[error("prox step {iteration} failed: {source}")]
    ProxFailed {
        iteration: usize,
        #[source]
        source: Box<PpaError>,
    },
    #[error("starting point is at distance {distance} from the minimizer, more than the radius {radius}")]
    RadiusViolated { distance: f64, radius: f64 },
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("the minimizer x* is unknown; supply it (e.g. with_minimizer) to check bounds")]
    MissingMinimizer,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("export failed: {0}")]
    Export(String),
}

/// One proximal step `argmin_y αf(y) + ½‖y − x‖²_B`.
pub fn prox_step(f: &dyn ProxFunction, alpha: f64, x: &[f64], metric: &Metric) -> Result<Vec<f64>, PpaError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(PpaError::InvalidStep(alpha));
    }
    if metric.dim() != x.len() {
        return Err(PpaError::DimensionMismatch {
            expected: metric.dim(),
            got: x.len(),
        });
    }
    f.prox(alpha, x, metric)
}

/// Iterates, function values and residual subgradients of one PPA run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `x_0, …, x_N`
    pub x: Vec<Vec<f64>>,
    /// `f(x_1), …, f(x_N)`
    pub f: Vec<f64>,
    /// `g_1, …, g_N`
    pub g: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "B")]
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_star: Option<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.f.len()
    }

    pub fn last_point(&self) -> &[f64] {
        self.x.last().expect("trajectory has x_0")
    }

    /// `g_N`
    pub fn last_subgradient(&self) -> &[f64] {
        self.g.last().expect("trajectory has at least one step")
    }

    /// `‖g_i‖_{B⁻¹}` for `i = 1..=N`.
    pub fn subgradient_norms(&self) -> Vec<f64> {
        self.g.iter().map(|g| self.metric.dual_norm(g)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }

    /// Per-iteration CSV with header `iteration,f,g_norm`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PpaError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| PpaError::Export(e.to_string());
        w.write_record(["iteration", "f", "g_norm"]).map_err(err)?;
        for (i, (f, g)) in self.f.iter().zip(self.subgradient_norms()).enumerate() {
            w.write_record(&[(i + 1).to_string(), f.to_string(), g.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| PpaError::Export(e.to_string()))
    }
}

/// Runs `N = sched.len()` proximal steps from `x0`.
///
/// When `f` knows a minimizer, `‖x0 − x*‖_B <= R` is required.
pub fn run_ppa(
    f: &dyn ProxFunction,
    sched: &StepSchedule,
    x0: &[f64],
    metric: &Metric,
    radius: f64,
) -> Result<Trajectory, PpaError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(PpaError::InvalidRadius(radius));
    }
    for expected in [f.dim(), metric.dim()] {
        if expected != x0.len() {
            return Err(PpaError::DimensionMismatch { expected, got: x0.len() });
        }
    }
    let x_star = f.minimizer();
    if let Some(xs) = &x_star {
        let d: Vec<f64> = x0.iter().zip(xs).map(|(a, b)| a - b).collect();
        let distance = metric.norm(&d);
        if distance > radius * (1.0 + 1e-12) {
            return Err(PpaError::RadiusViolated { distance, radius });
        }
    }

    let n = sched.len();
    let mut xs = Vec::with_capacity(n + 1);
    let mut fs = Vec::with_capacity(n);
    let mut gs = Vec::with_capacity(n);
    xs.push(x0.to_vec());
    for (i, &alpha) in sched.alphas().iter().enumerate() {
        let prev = &xs[i];
        let next = prox_step(f, alpha, prev, metric).map_err(|e| PpaError::ProxFailed {
            iteration: i + 1,
            source: Box::new(e),
        })?;
        let diff: Vec<f64> = prev.iter().zip(&next).map(|(a, b)| a - b).collect();
        gs.push(metric.apply(&diff).into_iter().map(|v| v / alpha).collect());
        fs.push(f.value(&next));
        xs.push(next);
    }
    let f_star = x_star.as_ref().map(|x| f.value(x));
    Ok(Trajectory {
        x: xs,
        f: fs,
        g: gs,
        alphas: sched.alphas().to_vec(),
        radius,
        metric: metric.clone(),
        x_star,
        f_star,
    })
}

/// Outcome of [`check_bounds`]. Margins are `bound − observed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub subgrad_ok: bool,
    pub fval_ok: bool,
    pub subgrad_norm: f64,
    pub subgrad_bound: f64,
    pub subgrad_margin: f64,
    pub fval_gap: f64,
    pub fval_bound: f64,
    pub fval_margin: f64,
    pub tol: f64,
}

impl BoundReport {
    pub fn ok(&self) -> bool {
        self.subgrad_ok && self.fval_ok
    }
}

pub const DEFAULT_BOUND_TOL: f64 = 1e-9;

pub fn check_bounds(traj: &Trajectory) -> Result<BoundReport, PpaError> {
    check_bounds_with(traj, DEFAULT_BOUND_TOL)
}

pub fn check_bounds_with(traj: &Trajectory, tol: f64) -> Result<BoundReport, PpaError> {
    let f_star = match (&traj.x_star, traj.f_star) {
        (Some(_), Some(fs)) => fs,
        _ => return Err(PpaError::MissingMinimizer),
    };
    let total = StepSchedule::new(traj.alphas.clone())?.total();
    let subgrad_norm = traj.metric.dual_norm(traj.last_subgradient());
    let subgrad_bound = traj.radius / total;
    let fval_gap = traj.f.last().copied().unwrap_or(f64::NAN) - f_star;
    let fval_bound = traj.radius * traj.radius / (4.0 * total);
    Ok(BoundReport {
        subgrad_ok: subgrad_norm <= subgrad_bound + tol,
        fval_ok: fval_gap <= fval_bound + tol,
        subgrad_norm,
        subgrad_bound,
        subgrad_margin: subgrad_bound - subgrad_norm,
        fval_gap,
        fval_bound,
        fval_margin: fval_bound - fval_gap,
        tol,
    })
}

/// Runs PPA under `B` and, separately, under the identity on
/// `f̃(z) = f(B^{-1/2} z)` from `B^{1/2} x0`, and returns the largest
/// componentwise gap between `x_i` and `B^{-1/2} z_i`.
pub fn metric_correspondence_gap(
    f: &dyn ProxFunction,
    sched: &StepSchedule,
    x0: &[f64],
    metric: &Metric,
    radius: f64,
) -> Result<f64, PpaError> {
    let direct = run_ppa(f, sched, x0, metric, radius)?;
    let f_tilde = f.compose(metric.inv_sqrt())?;
    let z0 = metric.sqrt().matvec(x0);
    let euclid = run_ppa(f_tilde.as_ref(), sched, &z0, &Metric::identity(x0.len()), radius)?;
    let gap = direct
        .x
        .iter()
        .zip(&euclid.x)
        .flat_map(|(x, z)| {
            let back = metric.inv_sqrt().matvec(z);
            x.iter().zip(back).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    Ok(gap)
}

/// Largest violation of `f(y) >= f_i + ⟨g_i, y − x_i⟩` over `y ∈ {x*, x_1..x_N}`.
pub fn interpolation_violation(traj: &Trajectory) -> Result<f64, PpaError> {
    let (xs, fs) = match (&traj.x_star, traj.f_star) {
        (Some(x), Some(f)) => (x, f),
        _ => return Err(PpaError::MissingMinimizer),
    };
    let mut points: Vec<(&[f64], f64)> = vec![(xs.as_slice(), fs)];
    for i in 0..traj.steps() {
        points.push((&traj.x[i + 1], traj.f[i]));
    }
    let mut worst = 0.0_f64;
    for i in 0..traj.steps() {
        let xi = &traj.x[i + 1];
        let gi = &traj.g[i];
        for &(y, fy) in &points {
            let d: Vec<f64> = y.iter().zip(xi).map(|(a, b)| a - b).collect();
            let lin = traj.f[i] + crate::linalg::dot(gi, &d);
            worst = worst.max(lin - fy);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(a: &[f64]) -> StepSchedule {
        StepSchedule::new(a.to_vec()).unwrap()
    }

    #[test]
    fn soft_threshold_worst_case_run() {
        let f = ScaledL1::new(0.5, 1).unwrap();
        let t = run_ppa(&f, &sched(&[1.0, 1.0]), &[-1.0], &Metric::identity(1), 1.0).unwrap();
        assert_eq!(t.x, vec![vec![-1.0], vec![-0.5], vec![0.0]]);
        assert_eq!(t.g[1], vec![-0.5]);
        let r = check_bounds(&t).unwrap();
        assert_eq!(r.subgrad_norm, 0.5);
        assert!(r.subgrad_margin.abs() < 1e-15);
        assert!(r.ok());
    }

    #[test]
    fn quadratic_single_step() {
        let f = Quadratic::half_squared_norm(1);
        let t = run_ppa(&f, &sched(&[1.0]), &[1.0], &Metric::identity(1), 1.0).unwrap();
        assert_eq!(t.x[1], vec![0.5]);
        assert_eq!(t.g[0], vec![0.5]);
        assert!(f.subgradient_residual(&t.x[1], &t.g[0]).unwrap() < 1e-15);
    }

    #[test]
    fn quadratic_geometric_decay() {
        // x_i = 2^{-i}, g_3 = (x_2 − x_3)/1 = 1/8
        let f = Quadratic::half_squared_norm(1);
        let t = run_ppa(&f, &sched(&[1.0, 1.0, 1.0]), &[1.0], &Metric::identity(1), 1.0).unwrap();
        assert_eq!(t.x[3], vec![0.125]);
        let r = check_bounds(&t).unwrap();
        assert_eq!(r.subgrad_norm, 0.125);
        assert!((r.subgrad_margin - (1.0 / 3.0 - 0.125)).abs() < 1e-15);
        assert!(r.subgrad_margin > 0.0 && r.ok());
    }

    #[test]
    fn zero_function_is_stationary() {
        let f = Quadratic::new(crate::linalg::Matrix::zeros(2, 2), vec![0.0, 0.0])
            .unwrap()
            .with_minimizer(vec![0.3, 0.4]);
        let t = run_ppa(&f, &sched(&[0.5, 2.0, 1.0]), &[0.3, 0.4], &Metric::identity(2), 1.0).unwrap();
        assert!(t.g.iter().all(|g| g.iter().all(|&v| v == 0.0)));
        let r = check_bounds(&t).unwrap();
        assert_eq!(r.subgrad_margin, r.subgrad_bound);
        assert_eq!(r.fval_margin, r.fval_bound);
    }

    #[test]
    fn function_value_bound_attained_by_half_coefficient_l1() {
        let s = sched(&[0.3, 1.1, 0.6]);
        let r = 2.0;
        let f = ScaledL1::new(r / (2.0 * s.total()), 1).unwrap();
        let t = run_ppa(&f, &s, &[-r], &Metric::identity(1), r).unwrap();
        let rep = check_bounds(&t).unwrap();
        assert!(rep.fval_margin.abs() < 1e-12, "{rep:?}");
    }

    #[test]
    fn missing_minimizer_is_reported() {
        let f = Quadratic::new(crate::linalg::Matrix::zeros(1, 1), vec![1.0]).unwrap();
        let t = run_ppa(&f, &sched(&[1.0]), &[0.0], &Metric::identity(1), 1.0).unwrap();
        let err = check_bounds(&t).unwrap_err();
        assert_eq!(err, PpaError::MissingMinimizer);
        assert!(err.to_string().contains("supply"));
    }

    #[test]
    fn radius_precondition() {
        let f = ScaledL1::new(1.0, 1).unwrap();
        let err = run_ppa(&f, &sched(&[1.0]), &[-2.0], &Metric::identity(1), 1.0).unwrap_err();
        assert!(matches!(err, PpaError::RadiusViolated { .. }));
        assert!(matches!(prox_step(&f, 0.0, &[1.0], &Metric::identity(1)), Err(PpaError::InvalidStep(_))));
    }

    #[test]
    fn json_and_csv_exports() {
        let f = ScaledL1::new(0.5, 1).unwrap();
        let t = run_ppa(&f, &sched(&[1.0, 1.0]), &[-1.0], &Metric::identity(1), 1.0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["x"], serde_json::json!([[-1.0], [-0.5], [0.0]]));
        assert_eq!(v["g"][1], serde_json::json!([-0.5]));
        assert_eq!(v["alphas"], serde_json::json!([1.0, 1.0]));
        assert_eq!(v["R"], serde_json::json!(1.0));
        let back: Trajectory = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(back, t);

        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "iteration,f,g_norm\n1,0.25,0.5\n2,0,0.5\n");
    }
}
