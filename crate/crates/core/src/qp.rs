//! Exact solver for tiny convex QPs by active-set enumeration.
//!
//! Solves `min ½ vᵀPv + qᵀv  s.t.  E v = d,  a_kᵀ v <= c_k` by trying every
//! admissible active set, solving its KKT system and keeping the candidates
//! that are primal and dual feasible. Inequalities are partitioned into
//! groups of which at most one member can be active (the two sides of a box
//! constraint, for instance), which keeps the enumeration at `3^n` for box
//! problems. Meant for dimension <= 8 or so.

use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub v: Vec<f64>,
    /// Multiplier per inequality (0 for inactive ones).
    pub ineq_multipliers: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoKktPoint {
    /// Smallest combined primal/dual violation seen over all active sets.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SmallQp {
    p: Matrix,
    q: Vec<f64>,
    eq: Vec<(Vec<f64>, f64)>,
    ineq: Vec<(Vec<f64>, f64)>,
    groups: Vec<Vec<usize>>,
}

impl SmallQp {
    pub fn new(p: Matrix, q: Vec<f64>) -> Self {
        assert_eq!(p.rows(), q.len());
        Self {
            p,
            q,
            eq: Vec::new(),
            ineq: Vec::new(),
            groups: Vec::new(),
        }
    }

    pub fn equality(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.eq.push((row, rhs));
        self
    }

    /// Adds a group of mutually exclusive inequalities `rowᵀ v <= rhs`.
    pub fn exclusive_group(mut self, rows: Vec<(Vec<f64>, f64)>) -> Self {
        let start = self.ineq.len();
        let ids = (start..start + rows.len()).collect();
        self.ineq.extend(rows);
        self.groups.push(ids);
        self
    }

    pub fn inequality(self, row: Vec<f64>, rhs: f64) -> Self {
        self.exclusive_group(vec![(row, rhs)])
    }

    pub fn solve(&self) -> Result<QpSolution, NoKktPoint> {
        let n = self.q.len();
        let scale = 1.0
            + self.p.max_abs()
            + self.q.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            + self.ineq.iter().fold(0.0_f64, |m, (_, c)| m.max(c.abs()));
        let tol = 1e-10 * scale;

        let mut choice = vec![0usize; self.groups.len()];
        let mut best: Option<QpSolution> = None;
        let mut best_residual = f64::INFINITY;
        loop {
            let active: Vec<usize> = self
                .groups
                .iter()
                .zip(&choice)
                .filter(|(_, &c)| c > 0)
                .map(|(g, &c)| g[c - 1])
                .collect();
            if active.len() <= n {
                if let Some((v, nu)) = self.solve_kkt(&active) {
                    let primal = self
                        .ineq
                        .iter()
                        .map(|(a, c)| (dot(a, &v) - c).max(0.0))
                        .fold(0.0, f64::max);
                    let dual = nu.iter().map(|&m| (-m).max(0.0)).fold(0.0, f64::max);
                    let viol = primal.max(dual);
                    if viol <= tol {
                        let mut mult = vec![0.0; self.ineq.len()];
                        for (&k, &m) in active.iter().zip(&nu) {
                            mult[k] = m.max(0.0);
                        }
                        let obj = self.objective(&v);
                        if best.as_ref().is_none_or(|b| obj < b.objective) {
                            best = Some(QpSolution {
                                v,
                                ineq_multipliers: mult,
                                objective: obj,
                            });
                        }
                    } else {
                        best_residual = best_residual.min(viol);
                    }
                }
            }
            // mixed-radix increment over group choices
            let mut k = 0;
            loop {
                if k == choice.len() {
                    return best.ok_or(NoKktPoint { residual: best_residual });
                }
                choice[k] += 1;
                if choice[k] <= self.groups[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
        }
    }

    fn objective(&self, v: &[f64]) -> f64 {
        0.5 * dot(v, &self.p.matvec(v)) + dot(&self.q, v)
    }

    fn solve_kkt(&self, active: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.q.len();
        let ne = self.eq.len();
        let na = active.len();
        let dim = n + ne + na;
        let mut k = Matrix::zeros(dim, dim);
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = self.p[(i, j)];
            }
            rhs[i] = -self.q[i];
        }
        let rows = self
            .eq
            .iter()
            .map(|(a, d)| (a, *d))
            .chain(active.iter().map(|&i| (&self.ineq[i].0, self.ineq[i].1)));
        for (r, (a, c)) in rows.enumerate() {
            for j in 0..n {
                k[(n + r, j)] = a[j];
                k[(j, n + r)] = a[j];
            }
            rhs[n + r] = c;
        }
        let sol = k.solve(&rhs).ok()?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((sol[..n].to_vec(), sol[n + ne..].to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_qp_clamps_like_projection() {
        // min ½‖v - (2, -3, 0.5)‖²  s.t. -1 <= v <= 1
        let target = [2.0, -3.0, 0.5];
        let mut qp = SmallQp::new(Matrix::identity(3), target.iter().map(|t| -t).collect());
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            let neg: Vec<f64> = e.iter().map(|v| -v).collect();
            qp = qp.exclusive_group(vec![(e, 1.0), (neg, 1.0)]);
        }
        let sol = qp.solve().unwrap();
        assert_eq!(sol.v, vec![1.0, -1.0, 0.5]);
        assert_eq!(sol.ineq_multipliers, vec![1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn simplex_constrained_projection() {
        // project (1, 1) onto the simplex {λ >= 0, λ1 + λ2 = 1}
        let qp = SmallQp::new(Matrix::identity(2), vec![-1.0, -1.0])
            .equality(vec![1.0, 1.0], 1.0)
            .inequality(vec![-1.0, 0.0], 0.0)
            .inequality(vec![0.0, -1.0], 0.0);
        let sol = qp.solve().unwrap();
        assert!((sol.v[0] - 0.5).abs() < 1e-15 && (sol.v[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn infeasible_reports_residual() {
        let qp = SmallQp::new(Matrix::identity(1), vec![0.0])
            .inequality(vec![1.0], -1.0)
            .inequality(vec![-1.0], -1.0);
        let err = qp.solve().unwrap_err();
        assert!(err.residual > 0.0);
    }
}
