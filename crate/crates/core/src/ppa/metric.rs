use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Matrix};

use super::PpaError;

/// Symmetric positive definite matrix `B` defining `‖x‖_B = sqrt(⟨Bx, x⟩)`
/// and its dual norm `‖u‖_{B⁻¹}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct Metric {
    b: Matrix,
    b_inv: Matrix,
    sqrt: Matrix,
    inv_sqrt: Matrix,
    identity: bool,
    diagonal: bool,
}

impl Metric {
    pub fn identity(n: usize) -> Self {
        Self {
            b: Matrix::identity(n),
            b_inv: Matrix::identity(n),
            sqrt: Matrix::identity(n),
            inv_sqrt: Matrix::identity(n),
            identity: true,
            diagonal: true,
        }
    }

    /// `B = c I`.
    pub fn scalar(n: usize, c: f64) -> Result<Self, PpaError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(PpaError::InvalidMetric(format!("scalar metric must be positive, got {c}")));
        }
        if c == 1.0 {
            return Ok(Self::identity(n));
        }
        let d = |v: f64| Matrix::from_diag(&vec![v; n]);
        Ok(Self {
            b: d(c),
            b_inv: d(1.0 / c),
            sqrt: d(c.sqrt()),
            inv_sqrt: d(1.0 / c.sqrt()),
            identity: false,
            diagonal: true,
        })
    }

    /// Validates symmetry (1e-12 relative) and positive definiteness.
    pub fn new(b: Matrix) -> Result<Self, PpaError> {
        if !b.is_square() {
            return Err(PpaError::InvalidMetric(format!("metric must be square, got {}x{}", b.rows(), b.cols())));
        }
        if b.asymmetry() > 1e-12 {
            return Err(PpaError::InvalidMetric(format!(
                "metric is not symmetric (relative asymmetry {:e})",
                b.asymmetry()
            )));
        }
        let b = b.symmetrized();
        let eig = b
            .symmetric_eigen()
            .map_err(|e| PpaError::InvalidMetric(e.to_string()))?;
        if !(eig.min() > 0.0) {
            return Err(PpaError::InvalidMetric(format!(
                "metric is not positive definite (smallest eigenvalue {:e})",
                eig.min()
            )));
        }
        let n = b.rows();
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || b[(i, j)] == 0.0));
        let identity = diagonal && (0..n).all(|i| b[(i, i)] == 1.0);
        if identity {
            return Ok(Self::identity(n));
        }
        Ok(Self {
            b_inv: eig.reconstruct_with(|l| 1.0 / l),
            sqrt: eig.reconstruct_with(f64::sqrt),
            inv_sqrt: eig.reconstruct_with(|l| 1.0 / l.sqrt()),
            b,
            identity: false,
            diagonal,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.rows()
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn matrix(&self) -> &Matrix {
        &self.b
    }

    pub fn inverse(&self) -> &Matrix {
        &self.b_inv
    }

    /// `B^{1/2}`
    pub fn sqrt(&self) -> &Matrix {
        &self.sqrt
    }

    /// `B^{-1/2}`
    pub fn inv_sqrt(&self) -> &Matrix {
        &self.inv_sqrt
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.identity {
            x.to_vec()
        } else {
            self.b.matvec(x)
        }
    }

    pub fn apply_inverse(&self, u: &[f64]) -> Vec<f64> {
        if self.identity {
            u.to_vec()
        } else {
            self.b_inv.matvec(u)
        }
    }

    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(&self.apply(x), y)
    }

    /// `‖x‖_B`
    pub fn norm(&self, x: &[f64]) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    /// `‖u‖_{B⁻¹}`
    pub fn dual_norm(&self, u: &[f64]) -> f64 {
        dot(&self.apply_inverse(u), u).max(0.0).sqrt()
    }
}

impl TryFrom<Matrix> for Metric {
    type Error = PpaError;
    fn try_from(m: Matrix) -> Result<Self, Self::Error> {
        Metric::new(m)
    }
}

impl From<Metric> for Matrix {
    fn from(m: Metric) -> Self {
        m.b
    }
}
