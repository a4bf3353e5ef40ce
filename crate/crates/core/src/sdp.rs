//! Primal-dual interior-point solver for small dense SDPs.
//!
//! Solves
//!
//! ```text
//! max ⟨C, G⟩ + c_Fᵀ F   s.t.  ⟨A_k, G⟩ + l_kᵀ F  (<=, >=, =)  b_k,   G ⪰ 0,  F free
//! ```
//!
//! with the HKM search direction and a Mehrotra predictor-corrector. The dual
//! is `min bᵀy` over `Z = Σ y_k A_k − C ⪰ 0`, `Σ y_k l_k = c_F`, `y_k >= 0` on
//! `<=` rows (after normalizing `>=` rows by negation). Rows are rescaled
//! to unit norm internally; everything reported is in the units of the
//! instance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dd::{Dd, DdCholesky, DdMatrix};
use crate::linalg::{dot, norm2, Cholesky, Matrix};
use crate::pep::{ConstraintId, SdpInstance, Sense};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

const STEP_FRACTION: f64 = 0.98;
const DIVERGENCE: f64 = 1e14;
const REFINEMENT_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖b − 𝒜(G) − LF − s‖ / (1 + ‖b‖)` on the rescaled rows.
    pub primal: f64,
    /// `(‖𝒜*(y) − C − Z‖ + ‖c_F − Lᵀy‖) / (1 + ‖C‖ + ‖c_F‖)`.
    pub dual: f64,
    /// `|pobj − dobj| / (1 + |pobj| + |dobj|)`.
    pub gap: f64,
    /// `(⟨G, Z⟩ + sᵀy) / (1 + |pobj| + |dobj|)`.
    pub complementarity: f64,
}

impl Residuals {
    fn worst(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("invalid instance: {0}")]
    InvalidInput(String),
    #[error(
        "no convergence in {iterations} iterations (best residuals: primal {:e}, dual {:e}, gap {:e})",
        best.primal, best.dual, best.gap
    )]
    MaxIterationsExceeded { iterations: usize, best: Residuals },
    #[error("numerical breakdown at iteration {iteration}: {reason}")]
    NumericalBreakdown { iteration: usize, reason: String },
    /// Iterates grew past 1e14; the instance is most likely unbounded.
    #[error("iterates diverged at iteration {iteration}; the instance is likely unbounded")]
    Diverged { iteration: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub objective: f64,
    pub dual_objective: f64,
    #[serde(rename = "G")]
    pub gram: Matrix,
    #[serde(rename = "F")]
    pub fvec: Vec<f64>,
    /// `Z = Σ y_k A_k − C` with the constraint rows as stored (`>=` rows
    /// enter with a minus sign).
    #[serde(rename = "Z")]
    pub dual_slack: Matrix,
    /// Nonnegative for inequality rows.
    pub duals: BTreeMap<ConstraintId, f64>,
    pub residuals: Residuals,
    pub iterations: usize,
    /// Eigenvalues of `G`, ascending.
    pub eigenvalues: Vec<f64>,
}

impl SdpSolution {
    pub fn dual(&self, id: ConstraintId) -> Option<f64> {
        self.duals.get(&id).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }
}

/// Number of eigenvalues of `G` above `rel_tol · λ_max`.
pub fn rank_profile(sol: &SdpSolution, rel_tol: f64) -> usize {
    count_above(&sol.eigenvalues, rel_tol)
}

pub fn matrix_rank_profile(m: &Matrix, rel_tol: f64) -> usize {
    match m.symmetrized().symmetric_eigen() {
        Ok(e) => count_above(&e.values, rel_tol),
        Err(_) => 0,
    }
}

fn count_above(values: &[f64], rel_tol: f64) -> usize {
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return 0;
    }
    values.iter().filter(|&&v| v > rel_tol * max).count()
}

struct Problem {
    n: usize,
    p: usize,
    a: Vec<Vec<(usize, usize, f64)>>,
    l: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Matrix,
    cf: Vec<f64>,
    ineq: Vec<bool>,
    // original row = row_scale[k] · normalized row
    row_scale: Vec<f64>,
}

impl Problem {
    fn new(inst: &SdpInstance) -> Result<Self, SdpError> {
        let n = inst.gram_dim;
        let p = inst.fvec_dim;
        let bad = |s: String| Err(SdpError::InvalidInput(s));
        if n == 0 {
            return bad("Gram block must have positive order".into());
        }
        if inst.objective.dim() != n || inst.objective_lin.len() != p {
            return bad("objective dimensions do not match the instance".into());
        }
        let mut a = Vec::with_capacity(inst.len());
        let mut l = Vec::with_capacity(inst.len());
        let mut b = Vec::with_capacity(inst.len());
        let mut ineq = Vec::with_capacity(inst.len());
        let mut row_scale = Vec::with_capacity(inst.len());
        for c in &inst.constraints {
            if c.quad.dim() != n || c.lin.len() != p {
                return bad(format!("constraint {} has mismatched dimensions", c.tag));
            }
            if !c.rhs.is_finite() {
                return bad(format!("constraint {} has non-finite rhs", c.tag));
            }
            let sign = if c.sense == Sense::Ge { -1.0 } else { 1.0 };
            let norm = (c.quad.matrix().frobenius_norm().powi(2) + dot(&c.lin, &c.lin)).sqrt();
            if norm == 0.0 {
                return bad(format!("constraint {} is identically zero", c.tag));
            }
            let s = sign / norm;
            a.push(c.quad.entries().into_iter().map(|(i, j, v)| (i, j, v * s)).collect());
            l.push(c.lin.iter().map(|v| v * s).collect());
            b.push(c.rhs * s);
            ineq.push(c.sense != Sense::Eq);
            row_scale.push(s);
        }
        Ok(Self {
            n,
            p,
            a,
            l,
            b,
            c: inst.objective.matrix().clone(),
            cf: inst.objective_lin.clone(),
            ineq,
            row_scale,
        })
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    fn apply_a(&self, x: &Matrix) -> Vec<f64> {
        self.a
            .iter()
            .map(|row| row.iter().map(|&(i, j, v)| v * x[(i, j)]).sum())
            .collect()
    }

    fn apply_at(&self, y: &[f64]) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.n);
        for (row, &yk) in self.a.iter().zip(y) {
            for &(i, j, v) in row {
                out[(i, j)] += yk * v;
            }
        }
        out
    }

    fn apply_l(&self, f: &[f64]) -> Vec<f64> {
        self.l.iter().map(|r| dot(r, f)).collect()
    }

    fn apply_lt(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        for (r, &yk) in self.l.iter().zip(y) {
            for (o, v) in out.iter_mut().zip(r) {
                *o += yk * v;
            }
        }
        out
    }
}

#[derive(Clone)]
struct Iterate {
    g: Matrix,
    f: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    z: Matrix,
}

struct Direction {
    g: Matrix,
    f: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    z: Matrix,
}

struct State {
    rp: Vec<f64>,
    rd: Matrix,
    rf: Vec<f64>,
    pobj: f64,
    dobj: f64,
    res: Residuals,
    mu: f64,
}

fn evaluate(pb: &Problem, it: &Iterate, b_norm: f64, c_norm: f64) -> State {
    let ag = pb.apply_a(&it.g);
    let lf = pb.apply_l(&it.f);
    let rp: Vec<f64> = (0..pb.m()).map(|k| pb.b[k] - ag[k] - lf[k] - it.s[k]).collect();
    let rd = pb.apply_at(&it.y).sub(&pb.c).sub(&it.z);
    let lty = pb.apply_lt(&it.y);
    let rf: Vec<f64> = pb.cf.iter().zip(&lty).map(|(c, v)| c - v).collect();
    let pobj = pb.c.frobenius_dot(&it.g) + dot(&pb.cf, &it.f);
    let dobj = dot(&pb.b, &it.y);
    let sy: f64 = it.s.iter().zip(&it.y).zip(&pb.ineq).filter(|(_, &q)| q).map(|((s, y), _)| s * y).sum();
    let gz = it.g.frobenius_dot(&it.z);
    let nu = pb.n + pb.ineq.iter().filter(|&&q| q).count();
    let denom = 1.0 + pobj.abs() + dobj.abs();
    let res = Residuals {
        primal: norm2(&rp) / (1.0 + b_norm),
        dual: (rd.frobenius_norm() + norm2(&rf)) / (1.0 + c_norm),
        gap: (pobj - dobj).abs() / denom,
        complementarity: (gz + sy) / denom,
    };
    State {
        rp,
        rd,
        rf,
        pobj,
        dobj,
        res,
        mu: (gz + sy) / nu as f64,
    }
}

// L⁻¹ X L⁻ᵀ for X symmetric
fn congruence(ch: &Cholesky, x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut y = Matrix::zeros(n, n);
    for j in 0..n {
        let col: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
        let c = ch.forward(&col);
        for i in 0..n {
            y[(i, j)] = c[i];
        }
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let r = ch.forward(y.row(i));
        for j in 0..n {
            out[(j, i)] = r[j];
        }
    }
    out.symmetrized()
}

fn max_psd_step(ch: &Cholesky, dx: &Matrix) -> Result<f64, String> {
    let w = congruence(ch, dx);
    let lmin = w.symmetric_eigen().map_err(|e| e.to_string())?.min();
    Ok(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn max_nonneg_step(x: &[f64], dx: &[f64], mask: &[bool]) -> f64 {
    x.iter()
        .zip(dx)
        .zip(mask)
        .filter(|((_, &d), &q)| q && d < 0.0)
        .map(|((&v, &d), _)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Newton<'a> {
    pb: &'a Problem,
    it: &'a Iterate,
    st: &'a State,
    zinv: Matrix,
    // augmented Schur complement M + ρLLᵀ
    schur: DdMatrix,
    m_chol: DdCholesky,
    // Cholesky of Lᵀ M⁻¹ L and the columns of M⁻¹ L
    schur_f: Option<(DdCholesky, Vec<Vec<Dd>>)>,
}

fn dd_vec(x: &[f64]) -> Vec<Dd> {
    x.iter().map(|&v| Dd::new(v)).collect()
}

fn dd_dot(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

// Cholesky, retried with growing diagonal shifts when rounding makes the
// Schur matrix marginally indefinite; refinement against the unshifted
// matrix removes the shift from the solution
fn factor_with_shift(m: &DdMatrix) -> Result<DdCholesky, crate::linalg::LinalgError> {
    let first = m.cholesky();
    if first.is_ok() {
        return first;
    }
    let n = m.dim();
    let scale = (0..n).map(|k| m.get(k, k).to_f64().abs()).fold(0.0_f64, f64::max);
    let mut shift = 1e-24 * scale;
    let mut shifted = m.clone();
    for _ in 0..10 {
        for k in 0..n {
            shifted.set(k, k, m.get(k, k) + Dd::new(shift));
        }
        if let Ok(ch) = shifted.cholesky() {
            return Ok(ch);
        }
        shift *= 100.0;
    }
    first
}

impl<'a> Newton<'a> {
    fn new(pb: &'a Problem, it: &'a Iterate, st: &'a State, iteration: usize) -> Result<Self, SdpError> {
        let brk = |reason: String| SdpError::NumericalBreakdown { iteration, reason };
        let zinv = it.z.spd_inverse().map_err(|e| brk(format!("dual slack factorization failed: {e}")))?;
        let n = pb.n;
        let m = pb.m();
        // P_l = G A_l Z⁻¹, then M_kl = ⟨A_k, P_lᵀ⟩
        let mut schur = DdMatrix::zeros(m);
        let mut p = vec![Dd::ZERO; n * n];
        for l in 0..m {
            p.iter_mut().for_each(|v| *v = Dd::ZERO);
            for &(c, d, w) in &pb.a[l] {
                for b in 0..n {
                    let gw = Dd::product(it.g[(b, c)], w);
                    if gw.to_f64() == 0.0 {
                        continue;
                    }
                    for a in 0..n {
                        p[b * n + a] += gw * Dd::new(zinv[(d, a)]);
                    }
                }
            }
            for k in 0..=l {
                let mut v = Dd::ZERO;
                for &(a, b, w) in &pb.a[k] {
                    v += p[b * n + a] * Dd::new(w);
                }
                schur.set(k, l, v);
                schur.set(l, k, v);
            }
        }
        for k in 0..m {
            if pb.ineq[k] {
                schur.add_to(k, k, Dd::new(it.s[k]) / Dd::new(it.y[k]));
            }
        }
        // rows living only in F make M singular; since Lᵀdy = r_f, adding
        // LLᵀ to M and L r_f to the right side leaves dy unchanged
        if pb.p > 0 {
            for k in 0..m {
                for l in k..m {
                    let v: Dd = pb.l[k].iter().zip(&pb.l[l]).map(|(a, b)| Dd::product(*a, *b)).sum();
                    schur.add_to(k, l, v);
                    if l != k {
                        schur.add_to(l, k, v);
                    }
                }
            }
        }
        let m_chol = factor_with_shift(&schur).map_err(|e| brk(format!("Schur complement factorization failed: {e}")))?;
        let schur_f = if pb.p > 0 {
            let cols: Vec<Vec<Dd>> = (0..pb.p)
                .map(|j| {
                    let lj: Vec<Dd> = pb.l.iter().map(|r| Dd::new(r[j])).collect();
                    m_chol.solve(&lj)
                })
                .collect();
            let mut sf = DdMatrix::zeros(pb.p);
            for i in 0..pb.p {
                for j in 0..pb.p {
                    let v: Dd = pb.l.iter().zip(&cols[j]).map(|(r, c)| Dd::new(r[i]) * *c).sum();
                    sf.set(i, j, v);
                }
            }
            let ch = sf.cholesky().map_err(|e| brk(format!("free-variable block is singular: {e}")))?;
            Some((ch, cols))
        } else {
            None
        };
        Ok(Self {
            pb,
            it,
            st,
            zinv,
            schur,
            m_chol,
            schur_f,
        })
    }

    fn lt(&self, y: &[Dd]) -> Vec<Dd> {
        (0..self.pb.p)
            .map(|j| self.pb.l.iter().zip(y).map(|(r, v)| Dd::new(r[j]) * *v).sum())
            .collect()
    }

    fn l(&self, f: &[Dd]) -> Vec<Dd> {
        self.pb.l.iter().map(|r| dd_dot(&dd_vec(r), f)).collect()
    }

    // [M −L; Lᵀ 0] (dy, dF) = (h, r_f) through the factored blocks
    fn solve_blocks(&self, h: &[Dd], rf: &[Dd]) -> (Vec<Dd>, Vec<Dd>) {
        let mh = self.m_chol.solve(h);
        match &self.schur_f {
            Some((ch, cols)) => {
                let ltmh = self.lt(&mh);
                let rhs: Vec<Dd> = rf.iter().zip(&ltmh).map(|(a, b)| *a - *b).collect();
                let df = ch.solve(&rhs);
                let mut dy = mh;
                for (j, col) in cols.iter().enumerate() {
                    for (d, c) in dy.iter_mut().zip(col) {
                        *d += df[j] * *c;
                    }
                }
                (dy, df)
            }
            None => (mh, Vec::new()),
        }
    }

    fn solve_saddle(&self, h: &[Dd], rf: &[Dd]) -> (Vec<Dd>, Vec<Dd>) {
        let (mut dy, mut df) = self.solve_blocks(h, rf);
        for _ in 0..REFINEMENT_STEPS {
            let mdy = self.schur.matvec(&dy);
            let ldf = self.l(&df);
            let r1: Vec<Dd> = (0..h.len()).map(|k| h[k] - mdy[k] + ldf[k]).collect();
            let ltdy = self.lt(&dy);
            let r2: Vec<Dd> = rf.iter().zip(&ltdy).map(|(a, b)| *a - *b).collect();
            let (ey, ef) = self.solve_blocks(&r1, &r2);
            dy.iter_mut().zip(&ey).for_each(|(a, b)| *a += *b);
            df.iter_mut().zip(&ef).for_each(|(a, b)| *a += *b);
        }
        (dy, df)
    }

    fn direction(&self, sigma_mu: f64, corr: Option<&Direction>) -> Direction {
        let (pb, it, st) = (self.pb, self.it, self.st);
        let n = pb.n;
        let m = pb.m();
        // σμZ⁻¹ − G − G Rd Z⁻¹ − dGa dZa Z⁻¹
        let mut base = self.zinv.scale(sigma_mu).sub(&it.g);
        base.axpy(-1.0, &it.g.matmul(&st.rd).matmul(&self.zinv));
        if let Some(c) = corr {
            base.axpy(-1.0, &c.g.matmul(&c.z).matmul(&self.zinv));
        }
        let base = base.symmetrized();
        let mut rs = vec![Dd::ZERO; m];
        for k in 0..m {
            if pb.ineq[k] {
                let cs = corr.map_or(Dd::ZERO, |c| Dd::product(c.s[k], c.y[k]));
                rs[k] = (Dd::new(sigma_mu) - Dd::product(it.s[k], it.y[k]) - cs) / Dd::new(it.y[k]);
            }
        }
        let h: Vec<Dd> = (0..m)
            .map(|k| {
                let ab: Dd = pb.a[k].iter().map(|&(i, j, w)| Dd::product(w, base[(i, j)])).sum();
                let lrf: Dd = pb.l[k].iter().zip(&st.rf).map(|(a, b)| Dd::product(*a, *b)).sum();
                ab + rs[k] - Dd::new(st.rp[k]) + lrf
            })
            .collect();
        let (dy, df) = self.solve_saddle(&h, &dd_vec(&st.rf));

        // dG = base − sym(G 𝒜*(dy) Z⁻¹), product carried in double-double
        let mut aty = vec![Dd::ZERO; n * n];
        for (row, &yk) in pb.a.iter().zip(&dy) {
            for &(i, j, w) in row {
                aty[i * n + j] += yk * Dd::new(w);
            }
        }
        let mut gx = vec![Dd::ZERO; n * n];
        for i in 0..n {
            for k in 0..n {
                let g = it.g[(i, k)];
                if g == 0.0 {
                    continue;
                }
                for j in 0..n {
                    gx[i * n + j] += Dd::new(g) * aty[k * n + j];
                }
            }
        }
        let mut prod = vec![Dd::ZERO; n * n];
        for i in 0..n {
            for k in 0..n {
                let v = gx[i * n + k];
                for j in 0..n {
                    prod[i * n + j] += v * Dd::new(self.zinv[(k, j)]);
                }
            }
        }
        let half = Dd::new(0.5);
        let dg = Matrix::from_fn(n, n, |i, j| (Dd::new(base[(i, j)]) - half * (prod[i * n + j] + prod[j * n + i])).to_f64());
        let dy_f: Vec<f64> = dy.iter().map(|v| v.to_f64()).collect();
        let dz = pb.apply_at(&dy_f).add(&st.rd);
        let ds: Vec<f64> = (0..m)
            .map(|k| {
                if pb.ineq[k] {
                    (rs[k] - Dd::new(it.s[k]) / Dd::new(it.y[k]) * dy[k]).to_f64()
                } else {
                    0.0
                }
            })
            .collect();
        Direction {
            g: dg,
            f: df.iter().map(|v| v.to_f64()).collect(),
            s: ds,
            y: dy_f,
            z: dz,
        }
    }
}

fn step_lengths(pb: &Problem, it: &Iterate, d: &Direction, g_chol: &Cholesky, z_chol: &Cholesky) -> Result<(f64, f64), String> {
    let tp = max_psd_step(g_chol, &d.g)?.min(max_nonneg_step(&it.s, &d.s, &pb.ineq));
    let td = max_psd_step(z_chol, &d.z)?.min(max_nonneg_step(&it.y, &d.y, &pb.ineq));
    Ok((tp, td))
}

fn advance(it: &Iterate, d: &Direction, ap: f64, ad: f64) -> Iterate {
    let mut g = it.g.clone();
    g.axpy(ap, &d.g);
    let mut z = it.z.clone();
    z.axpy(ad, &d.z);
    let lin = |x: &[f64], dx: &[f64], a: f64| x.iter().zip(dx).map(|(v, d)| v + a * d).collect::<Vec<_>>();
    Iterate {
        g: g.symmetrized(),
        f: lin(&it.f, &d.f, ap),
        s: lin(&it.s, &d.s, ap),
        y: lin(&it.y, &d.y, ad),
        z: z.symmetrized(),
    }
}

/// Solves the instance to relative KKT residuals `<= tol`.
pub fn solve(inst: &SdpInstance, tol: f64, max_iter: usize) -> Result<SdpSolution, SdpError> {
    if !(tol > 0.0) {
        return Err(SdpError::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let pb = Problem::new(inst)?;
    let n = pb.n;
    let m = pb.m();
    let b_norm = norm2(&pb.b);
    let c_norm = (pb.c.frobenius_norm().powi(2) + dot(&pb.cf, &pb.cf)).sqrt();

    let xi = (n as f64).sqrt().max(10.0) * (1.0 + pb.b.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
    let eta = (n as f64).sqrt().max(10.0).max(pb.c.max_abs());
    let mut it = Iterate {
        g: Matrix::identity(n).scale(xi),
        f: vec![0.0; pb.p],
        s: pb.ineq.iter().map(|&q| if q { xi } else { 0.0 }).collect(),
        y: pb.ineq.iter().map(|&q| if q { eta } else { 0.0 }).collect(),
        z: Matrix::identity(n).scale(eta),
    };

    let mut best = Residuals {
        primal: f64::INFINITY,
        dual: f64::INFINITY,
        gap: f64::INFINITY,
        complementarity: f64::INFINITY,
    };
    for iteration in 0..=max_iter {
        let st = evaluate(&pb, &it, b_norm, c_norm);
        if st.res.worst() < best.worst() {
            best = st.res;
        }
        if st.res.worst() <= tol {
            return Ok(finish(inst, &pb, it, &st, iteration));
        }
        if iteration == max_iter {
            break;
        }
        if it.g.max_abs() > DIVERGENCE || it.z.max_abs() > DIVERGENCE {
            return Err(SdpError::Diverged { iteration });
        }
        let brk = |reason: String| SdpError::NumericalBreakdown { iteration, reason };
        let g_chol = it.g.cholesky().map_err(|e| brk(format!("primal iterate lost definiteness: {e}")))?;
        let z_chol = it.z.cholesky().map_err(|e| brk(format!("dual iterate lost definiteness: {e}")))?;
        let newton = Newton::new(&pb, &it, &st, iteration)?;

        let pred = newton.direction(0.0, None);
        let (tp, td) = step_lengths(&pb, &it, &pred, &g_chol, &z_chol).map_err(brk)?;
        let trial = advance(&it, &pred, tp.min(1.0), td.min(1.0));
        let nu = (n + pb.ineq.iter().filter(|&&q| q).count()) as f64;
        let sy: f64 = (0..m).filter(|&k| pb.ineq[k]).map(|k| trial.s[k] * trial.y[k]).sum();
        let mu_aff = (trial.g.frobenius_dot(&trial.z) + sy) / nu;
        let sigma = (mu_aff / st.mu).clamp(0.0, 1.0).powi(3);

        let corr = newton.direction(sigma * st.mu, Some(&pred));
        let (tp, td) = step_lengths(&pb, &it, &corr, &g_chol, &z_chol).map_err(brk)?;
        let (mut ap, mut ad) = ((STEP_FRACTION * tp).min(1.0), (STEP_FRACTION * td).min(1.0));
        // rounding can push a near-singular iterate across the cone boundary
        let mut next = advance(&it, &corr, ap, ad);
        let mut tries = 0;
        while next.g.cholesky().is_err() || next.z.cholesky().is_err() {
            tries += 1;
            if tries > 30 {
                return Err(brk("no step keeps the iterates positive definite".into()));
            }
            ap *= 0.8;
            ad *= 0.8;
            next = advance(&it, &corr, ap, ad);
        }
        it = next;
    }
    Err(SdpError::MaxIterationsExceeded {
        iterations: max_iter,
        best,
    })
}

fn finish(inst: &SdpInstance, pb: &Problem, it: Iterate, st: &State, iterations: usize) -> SdpSolution {
    let gram = it.g.symmetrized();
    let eigenvalues = gram.symmetric_eigen().map(|e| e.values).unwrap_or_default();
    let duals = inst
        .constraints
        .iter()
        .zip(&it.y)
        .zip(&pb.row_scale)
        .map(|((c, &y), &s)| {
            // y_orig multiplies the row as stored; >= rows were negated
            let sign = if c.sense == Sense::Ge { -1.0 } else { 1.0 };
            (c.tag, y * s * sign)
        })
        .collect();
    SdpSolution {
        objective: st.pobj,
        dual_objective: st.dobj,
        gram,
        fvec: it.f,
        dual_slack: it.z,
        duals,
        residuals: st.res,
        iterations,
        eigenvalues,
    }
}
