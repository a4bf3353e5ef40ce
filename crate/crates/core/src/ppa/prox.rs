//! Proximal rules `prox^B_{αf}(x) = argmin_y αf(y) + ½‖y − x‖²_B` for the
//! built-in convex function families.
//!
//! Closed forms are used where they exist (soft-thresholding and clamping
//! under diagonal metrics, a linear solve for quadratics). Everything else is
//! reduced to a tiny QP and solved exactly by active-set enumeration.

use std::fmt::Debug;

use crate::linalg::{dot, norm2, Matrix};
use crate::qp::SmallQp;

use super::{Metric, PpaError};

/// A closed proper convex function with a computable proximal mapping.
pub trait ProxFunction: Debug + Send + Sync {
    /// Short family name (`l1`, `quad`, `box`, `maxaffine`).
    fn kind(&self) -> &'static str;

    fn dim(&self) -> usize;

    /// `f(x)`, `+∞` outside the domain.
    fn value(&self, x: &[f64]) -> f64;

    fn prox(&self, alpha: f64, x: &[f64], metric: &Metric) -> Result<Vec<f64>, PpaError>;

    /// A known minimizer, if any.
    fn minimizer(&self) -> Option<Vec<f64>>;

    /// Euclidean distance from `g` to `∂f(y)`, where the family can compute it.
    fn subgradient_residual(&self, _y: &[f64], _g: &[f64]) -> Option<f64> {
        None
    }

    /// `z ↦ f(M z)` for an invertible square `M`, within the same family.
    fn compose(&self, map: &Matrix) -> Result<Box<dyn ProxFunction>, PpaError>;
}

fn check_dim(expected: usize, got: usize) -> Result<(), PpaError> {
    if expected == got {
        Ok(())
    } else {
        Err(PpaError::DimensionMismatch { expected, got })
    }
}

fn compose_map(current: Option<&Matrix>, map: &Matrix) -> Matrix {
    match current {
        Some(m) => m.matmul(map),
        None => map.clone(),
    }
}

fn pull_back_minimizer(map: &Matrix, x: Option<Vec<f64>>) -> Result<Option<Vec<f64>>, PpaError> {
    x.map(|x| {
        map.solve(&x)
            .map_err(|e| PpaError::InvalidFunction(format!("composition map is not invertible: {e}")))
    })
    .transpose()
}

fn qp_failure(e: crate::qp::NoKktPoint) -> PpaError {
    PpaError::ProxNotConverged { residual: e.residual }
}

/// `f(x) = c ‖M x‖₁` (with `M = I` unless composed).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledL1 {
    coeff: f64,
    dim: usize,
    map: Option<Matrix>,
}

impl ScaledL1 {
    pub fn new(coeff: f64, dim: usize) -> Result<Self, PpaError> {
        if !(coeff >= 0.0 && coeff.is_finite()) {
            return Err(PpaError::InvalidFunction(format!("l1 coefficient must be >= 0, got {coeff}")));
        }
        Ok(Self { coeff, dim, map: None })
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }
}

impl ProxFunction for ScaledL1 {
    fn kind(&self) -> &'static str {
        "l1"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mx = match &self.map {
            Some(m) => m.matvec(x),
            None => x.to_vec(),
        };
        self.coeff * mx.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox(&self, alpha: f64, x: &[f64], metric: &Metric) -> Result<Vec<f64>, PpaError> {
        check_dim(self.dim, x.len())?;
        let t = alpha * self.coeff;
        if self.map.is_none() && metric.is_diagonal() {
            let b = metric.matrix();
            return Ok(x
                .iter()
                .enumerate()
                .map(|(i, &xi)| xi.signum() * (xi.abs() - t / b[(i, i)]).max(0.0))
                .collect());
        }
        // dual: min ½ uᵀ(M B⁻¹ Mᵀ)u − uᵀMx over ‖u‖∞ <= αc, then y = x − B⁻¹Mᵀu
        let m = self.map.clone().unwrap_or_else(|| Matrix::identity(self.dim));
        let h = m.matmul(metric.inverse()).matmul(&m.transpose()).symmetrized();
        let mx = m.matvec(x);
        let rows = m.rows();
        let mut qp = SmallQp::new(h, mx.iter().map(|v| -v).collect());
        for i in 0..rows {
            let mut e = vec![0.0; rows];
            e[i] = 1.0;
            let ne: Vec<f64> = e.iter().map(|v| -v).collect();
            qp = qp.exclusive_group(vec![(e, t), (ne, t)]);
        }
        let u = qp.solve().map_err(qp_failure)?.v;
        let shift = metric.apply_inverse(&m.transpose().matvec(&u));
        Ok(x.iter().zip(&shift).map(|(a, b)| a - b).collect())
    }

    fn minimizer(&self) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim])
    }

    fn subgradient_residual(&self, y: &[f64], g: &[f64]) -> Option<f64> {
        if self.map.is_some() {
            return None;
        }
        let c = self.coeff;
        let r2: f64 = y
            .iter()
            .zip(g)
            .map(|(&yi, &gi)| {
                let d = if yi != 0.0 { gi - c * yi.signum() } else { (gi.abs() - c).max(0.0) };
                d * d
            })
            .sum();
        Some(r2.sqrt())
    }

    fn compose(&self, map: &Matrix) -> Result<Box<dyn ProxFunction>, PpaError> {
        check_dim(self.dim, map.rows())?;
        Ok(Box::new(ScaledL1 {
            coeff: self.coeff,
            dim: map.cols(),
            map: Some(compose_map(self.map.as_ref(), map)),
        }))
    }
}

/// `f(x) = ½ xᵀQx + bᵀx` with `Q` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    q: Matrix,
    b: Vec<f64>,
    minimizer: Option<Vec<f64>>,
}

impl Quadratic {
    /// The minimizer is computed when `Q` is positive definite.
    pub fn new(q: Matrix, b: Vec<f64>) -> Result<Self, PpaError> {
        if !q.is_square() || q.rows() != b.len() {
            return Err(PpaError::InvalidFunction("quadratic needs square Q matching b".into()));
        }
        if q.asymmetry() > 1e-12 {
            return Err(PpaError::InvalidFunction("Q must be symmetric".into()));
        }
        let q = q.symmetrized();
        let eig = q.symmetric_eigen().map_err(|e| PpaError::InvalidFunction(e.to_string()))?;
        if eig.min() < -1e-12 * eig.max().abs().max(1.0) {
            return Err(PpaError::InvalidFunction(format!(
                "Q must be positive semidefinite (smallest eigenvalue {:e})",
                eig.min()
            )));
        }
        let minimizer = q
            .cholesky()
            .ok()
            .map(|ch| ch.solve(&b).into_iter().map(|v| -v).collect());
        Ok(Self { q, b, minimizer })
    }

    /// `½‖x‖²` in dimension `n`.
    pub fn half_squared_norm(n: usize) -> Self {
        Self::new(Matrix::identity(n), vec![0.0; n]).expect("identity is PSD")
    }

    pub fn with_minimizer(mut self, x: Vec<f64>) -> Self {
        self.minimizer = Some(x);
        self
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.q.matvec(x).iter().zip(&self.b).map(|(a, b)| a + b).collect()
    }
}

fn is_diagonal(m: &Matrix) -> bool {
    (0..m.rows()).all(|i| (0..m.cols()).all(|j| i == j || m[(i, j)] == 0.0))
}

impl ProxFunction for Quadratic {
    fn kind(&self) -> &'static str {
        "quad"
    }

    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.q.matvec(x)) + dot(&self.b, x)
    }

    fn prox(&self, alpha: f64, x: &[f64], metric: &Metric) -> Result<Vec<f64>, PpaError> {
        check_dim(self.dim(), x.len())?;
        if metric.is_diagonal() && self.q.asymmetry() == 0.0 && is_diagonal(&self.q) {
            let b = metric.matrix();
            return Ok((0..x.len())
                .map(|i| (b[(i, i)] * x[i] - alpha * self.b[i]) / (b[(i, i)] + alpha * self.q[(i, i)]))
                .collect());
        }
        // (B + αQ) y = Bx − αb
        let lhs = metric.matrix().add(&self.q.scale(alpha));
        let rhs: Vec<f64> = metric.apply(x).iter().zip(&self.b).map(|(bx, b)| bx - alpha * b).collect();
        let ch = lhs.cholesky().map_err(|_| PpaError::ProxNotConverged { residual: f64::INFINITY })?;
        let y = ch.solve(&rhs);
        let res: Vec<f64> = lhs.matvec(&y).iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let r = norm2(&res);
        if !(r <= 1e-9 * (1.0 + norm2(&rhs))) {
            return Err(PpaError::ProxNotConverged { residual: r });
        }
        Ok(y)
    }

    fn minimizer(&self) -> Option<Vec<f64>> {
        self.minimizer.clone()
    }

    fn subgradient_residual(&self, y: &[f64], g: &[f64]) -> Option<f64> {
        let d: Vec<f64> = self.gradient(y).iter().zip(g).map(|(a, b)| a - b).collect();
        Some(norm2(&d))
    }

    fn compose(&self, map: &Matrix) -> Result<Box<dyn ProxFunction>, PpaError> {
        check_dim(self.dim(), map.rows())?;
        let q = map.transpose().matmul(&self.q).matmul(map).symmetrized();
        let b = map.transpose().matvec(&self.b);
        let mut out = Quadratic::new(q, b)?;
        if let Some(x) = pull_back_minimizer(map, self.minimizer.clone())? {
            out.minimizer = Some(x);
        }
        Ok(Box::new(out))
    }
}

/// Indicator of `{x : lower <= M x <= upper}` (with `M = I` unless composed).
/// Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxIndicator {
    lower: Vec<f64>,
    upper: Vec<f64>,
    dim: usize,
    map: Option<Matrix>,
    minimizer: Option<Vec<f64>>,
}

impl BoxIndicator {
    /// The default minimizer is the point of the box closest to the origin.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, PpaError> {
        check_dim(lower.len(), upper.len())?;
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i]) || lower[i] == f64::INFINITY || upper[i] == f64::NEG_INFINITY) {
            return Err(PpaError::InvalidFunction(format!(
                "box bounds at index {} are empty: [{}, {}]",
                i + 1,
                lower[i],
                upper[i]
            )));
        }
        let minimizer = lower.iter().zip(&upper).map(|(l, u)| 0.0_f64.clamp(*l, *u)).collect();
        Ok(Self {
            dim: lower.len(),
            lower,
            upper,
            map: None,
            minimizer: Some(minimizer),
        })
    }

    /// Any point of the box is a minimizer; pick one.
    pub fn with_minimizer(mut self, x: Vec<f64>) -> Result<Self, PpaError> {
        check_dim(self.dim, x.len())?;
        if self.value(&x) != 0.0 {
            return Err(PpaError::InvalidFunction("minimizer must lie in the box".into()));
        }
        self.minimizer = Some(x);
        Ok(self)
    }

    fn slack_tol(bound: f64) -> f64 {
        1e-9 * (1.0 + if bound.is_finite() { bound.abs() } else { 0.0 })
    }
}

impl ProxFunction for BoxIndicator {
    fn kind(&self) -> &'static str {
        "box"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mx = match &self.map {
            Some(m) => m.matvec(x),
            None => x.to_vec(),
        };
        let inside = mx.iter().enumerate().all(|(i, &v)| {
            v >= self.lower[i] - Self::slack_tol(self.lower[i]) && v <= self.upper[i] + Self::slack_tol(self.upper[i])
        });
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, _alpha: f64, x: &[f64], metric: &Metric) -> Result<Vec<f64>, PpaError> {
        check_dim(self.dim, x.len())?;
        if self.map.is_none() && metric.is_diagonal() {
            return Ok(x
                .iter()
                .enumerate()
                .map(|(i, &v)| v.clamp(self.lower[i], self.upper[i]))
                .collect());
        }
        let m = self.map.clone().unwrap_or_else(|| Matrix::identity(self.dim));
        let bx = metric.apply(x);
        let mut qp = SmallQp::new(metric.matrix().clone(), bx.iter().map(|v| -v).collect());
        for i in 0..m.rows() {
            let row = m.row(i).to_vec();
            let mut group = Vec::new();
            if self.upper[i].is_finite() {
                group.push((row.clone(), self.upper[i]));
            }
            if self.lower[i].is_finite() {
                group.push((row.iter().map(|v| -v).collect(), -self.lower[i]));
            }
            if !group.is_empty() {
                qp = qp.exclusive_group(group);
            }
        }
        Ok(qp.solve().map_err(qp_failure)?.v)
    }

    fn minimizer(&self) -> Option<Vec<f64>> {
        self.minimizer.clone()
    }

    fn subgradient_residual(&self, y: &[f64], g: &[f64]) -> Option<f64> {
        if self.map.is_some() {
            return None;
        }
        if self.value(y).is_infinite() {
            return Some(f64::INFINITY);
        }
        let r2: f64 = (0..self.dim)
            .map(|i| {
                let at_lo = (y[i] - self.lower[i]).abs() <= Self::slack_tol(self.lower[i]);
                let at_hi = (y[i] - self.upper[i]).abs() <= Self::slack_tol(self.upper[i]);
                let d = match (at_lo, at_hi) {
                    (true, true) => 0.0,
                    (true, false) => g[i].max(0.0),
                    (false, true) => (-g[i]).max(0.0),
                    (false, false) => g[i].abs(),
                };
                d * d
            })
            .sum();
        Some(r2.sqrt())
    }

    fn compose(&self, map: &Matrix) -> Result<Box<dyn ProxFunction>, PpaError> {
        check_dim(self.dim, map.rows())?;
        Ok(Box::new(BoxIndicator {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            dim: map.cols(),
            map: Some(compose_map(self.map.as_ref(), map)),
            minimizer: pull_back_minimizer(map, self.minimizer.clone())?,
        }))
    }
}

/// `f(x) = max_k (a_kᵀx + b_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxAffine {
    slopes: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    minimizer: Option<Vec<f64>>,
}

impl MaxAffine {
    pub fn new(slopes: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self, PpaError> {
        check_dim(slopes.len(), offsets.len())?;
        let n = slopes.first().map(Vec::len).ok_or_else(|| PpaError::InvalidFunction("max-affine needs at least one piece".into()))?;
        if slopes.iter().any(|a| a.len() != n) {
            return Err(PpaError::InvalidFunction("all slopes must have the same dimension".into()));
        }
        Ok(Self {
            slopes,
            offsets,
            minimizer: None,
        })
    }

    /// Records a minimizer; checked against `0 ∈ ∂f(x)`.
    pub fn with_minimizer(mut self, x: Vec<f64>) -> Result<Self, PpaError> {
        check_dim(self.dim(), x.len())?;
        let zero = vec![0.0; x.len()];
        let r = self.subgradient_residual(&x, &zero).unwrap_or(f64::INFINITY);
        if !(r <= 1e-9) {
            return Err(PpaError::InvalidFunction(format!("point is not a minimizer (residual {r:e})")));
        }
        self.minimizer = Some(x);
        Ok(self)
    }

    pub fn pieces(&self) -> usize {
        self.slopes.len()
    }
}

impl ProxFunction for MaxAffine {
    fn kind(&self) -> &'static str {
        "maxaffine"
    }

    fn dim(&self) -> usize {
        self.slopes[0].len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.slopes
            .iter()
            .zip(&self.offsets)
            .map(|(a, b)| dot(a, x) + b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn prox(&self, alpha: f64, x: &[f64], metric: &Metric) -> Result<Vec<f64>, PpaError> {
        let n = self.dim();
        check_dim(n, x.len())?;
        // epigraph: min αt + ½(y − x)ᵀB(y − x)  s.t.  a_kᵀy − t <= −b_k
        let b = metric.matrix();
        let p = Matrix::from_fn(n + 1, n + 1, |i, j| if i < n && j < n { b[(i, j)] } else { 0.0 });
        let mut q: Vec<f64> = metric.apply(x).iter().map(|v| -v).collect();
        q.push(alpha);
        let mut qp = SmallQp::new(p, q);
        for (a, off) in self.slopes.iter().zip(&self.offsets) {
            let mut row = a.clone();
            row.push(-1.0);
            qp = qp.inequality(row, -off);
        }
        let mut v = qp.solve().map_err(qp_failure)?.v;
        v.truncate(n);
        Ok(v)
    }

    fn minimizer(&self) -> Option<Vec<f64>> {
        self.minimizer.clone()
    }

    fn subgradient_residual(&self, y: &[f64], g: &[f64]) -> Option<f64> {
        let fy = self.value(y);
        let tol = 1e-9 * (1.0 + fy.abs());
        let active: Vec<&Vec<f64>> = self
            .slopes
            .iter()
            .zip(&self.offsets)
            .filter(|(a, b)| dot(a, y) + *b >= fy - tol)
            .map(|(a, _)| a)
            .collect();
        // distance from g to conv{a_k : k active}
        let k = active.len();
        let p = Matrix::from_fn(k, k, |i, j| dot(active[i], active[j]));
        let q: Vec<f64> = active.iter().map(|a| -dot(a, g)).collect();
        let mut qp = SmallQp::new(p, q).equality(vec![1.0; k], 1.0);
        for i in 0..k {
            let mut row = vec![0.0; k];
            row[i] = -1.0;
            qp = qp.inequality(row, 0.0);
        }
        let sol = qp.solve().ok()?;
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        for (lam, a) in sol.v.iter().zip(&active) {
            for (di, ai) in d.iter_mut().zip(a.iter()) {
                *di += lam * ai;
            }
        }
        Some(norm2(&d))
    }

    fn compose(&self, map: &Matrix) -> Result<Box<dyn ProxFunction>, PpaError> {
        check_dim(self.dim(), map.rows())?;
        let mt = map.transpose();
        Ok(Box::new(MaxAffine {
            slopes: self.slopes.iter().map(|a| mt.matvec(a)).collect(),
            offsets: self.offsets.clone(),
            minimizer: pull_back_minimizer(map, self.minimizer.clone())?,
        }))
    }
}
