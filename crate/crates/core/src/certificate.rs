//! Closed-form dual certificate for the PPA subgradient-norm bound.
//!
//! For a schedule with separator `s` the multipliers below are a dual
//! feasible point of the reduced PEP with value `1/α_{1:N}²`. Aggregating the
//! multiplied constraints leaves a quadratic form `A3` in the iterates, and
//! the bound follows once `A3 ⪰ 0`. That is shown by writing `A3` as an
//! explicit sum of nonnegatively weighted squares, one display per case of
//! `s`. Every step is evaluated in double-double and compared against the
//! direct aggregation, so a passing report is a numerical proof of the bound
//! for that schedule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dd::{Dd, DdMatrix};
use crate::linalg::Matrix;
use crate::pep::{ConstraintId, QuadForm};
use crate::schedule::{Separator, SosCase, StepSchedule};

pub const CANCELLATION_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const SOS_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("f_{index} does not cancel (residual {residual:e}); refusing to aggregate")]
    Cancellation { index: usize, residual: f64 },
    #[error("multiplier set and schedule disagree: {0}")]
    Mismatch(String),
}

/// Lagrange multipliers of the `3N` constraints kept by the reduction.
/// Constraints outside that set carry an implicit zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "MultiplierTable")]
pub struct MultiplierSet {
    sched: StepSchedule,
    separator: Separator,
    values: BTreeMap<ConstraintId, Dd>,
}

#[derive(Debug, Clone, Serialize)]
struct MultiplierTable {
    separator: usize,
    multipliers: BTreeMap<ConstraintId, f64>,
}

impl From<MultiplierSet> for MultiplierTable {
    fn from(m: MultiplierSet) -> Self {
        MultiplierTable {
            separator: m.separator.index(),
            multipliers: m.values.iter().map(|(k, v)| (*k, v.to_f64())).collect(),
        }
    }
}

impl MultiplierSet {
    pub fn schedule(&self) -> &StepSchedule {
        &self.sched
    }

    pub fn separator(&self) -> Separator {
        self.separator
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 0 for constraints without an entry.
    pub fn get(&self, id: ConstraintId) -> f64 {
        self.get_dd(id).to_f64()
    }

    pub fn get_dd(&self, id: ConstraintId) -> Dd {
        self.values.get(&id).copied().unwrap_or(Dd::ZERO)
    }

    pub fn contains(&self, id: ConstraintId) -> bool {
        self.values.contains_key(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ConstraintId, f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, v.to_f64()))
    }

    /// Overrides one entry, for probing the checks with a perturbed set.
    pub fn set(&mut self, id: ConstraintId, value: f64) {
        self.values.insert(id, Dd::new(value));
    }

    pub fn min_value(&self) -> f64 {
        self.values.values().map(|v| v.to_f64()).fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("multipliers serialize")
    }
}

/// The closed-form multipliers for `sched`, normalized to radius 1.
pub fn multipliers(sched: &StepSchedule) -> MultiplierSet {
    let n = sched.len();
    let sep = sched.separator();
    let s = sep.index();
    let a = |i: usize, j: usize| sched.sum_dd(i, j);
    let al = |i: usize| sched.alpha_dd(i);
    let t = a(1, n);
    let two = Dd::new(2.0);
    let mut v = BTreeMap::new();

    v.insert(ConstraintId::Radius, Dd::ONE / (t * t));
    for i in 1..s {
        v.insert(ConstraintId::AtOpt(i), two * al(i) / (a(i, n) * a(i + 1, n)));
        v.insert(ConstraintId::Cross(i + 1, i), two * a(1, i) / (t * a(i + 1, n)));
        v.insert(ConstraintId::Cross(i, i + 1), Dd::ZERO);
    }
    v.insert(ConstraintId::AtOpt(s), two * (a(s, n) - a(1, s - 1)) / (t * a(s, n)));
    for i in s..n {
        v.insert(ConstraintId::Cross(i + 1, i), two * (a(1, i) - a(i + 2, n)) / (t * al(i + 1)));
        v.insert(ConstraintId::Cross(i, i + 1), two * (a(1, i) - a(i + 1, n)) / (t * al(i + 1)));
    }
    for i in s + 1..=n {
        v.insert(ConstraintId::AtOpt(i), Dd::ZERO);
    }
    v.insert(ConstraintId::FNonneg(n), two / t);
    MultiplierSet {
        sched: sched.clone(),
        separator: sep,
        values: v,
    }
}

type Sparse = Vec<(usize, Dd)>;

// each kept constraint as h(x, f) <= 0: (⟨u, v⟩ factors, f-coefficients)
fn constraint_terms(sched: &StepSchedule, id: ConstraintId) -> (Sparse, Sparse, Sparse) {
    let g = |i: usize| {
        let inv = Dd::ONE / sched.alpha_dd(i);
        vec![(i - 1, inv), (i, -inv)]
    };
    match id {
        ConstraintId::Radius => (vec![(0, Dd::ONE)], vec![(0, Dd::ONE)], vec![]),
        ConstraintId::FNonneg(i) => (vec![], vec![], vec![(i, -Dd::ONE)]),
        // f_i + ⟨g_i, −x_i⟩
        ConstraintId::AtOpt(i) => (g(i), vec![(i, -Dd::ONE)], vec![(i, Dd::ONE)]),
        // f_i − f_j + ⟨g_i, x_j − x_i⟩
        ConstraintId::Cross(i, j) => (g(i), vec![(j, Dd::ONE), (i, -Dd::ONE)], vec![(i, Dd::ONE), (j, -Dd::ONE)]),
        ConstraintId::Aux(_) => (vec![], vec![], vec![]),
    }
}

/// Signed sum of the multipliers hitting each `f_i`, `i = 1..=N`.
pub fn f_cancellation_check(ms: &MultiplierSet) -> Vec<f64> {
    f_cancellation_dd(ms).into_iter().map(Dd::to_f64).collect()
}

fn f_cancellation_dd(ms: &MultiplierSet) -> Vec<Dd> {
    let n = ms.sched.len();
    let mut out = vec![Dd::ZERO; n];
    for (&id, &lam) in &ms.values {
        for (i, c) in constraint_terms(&ms.sched, id).2 {
            out[i - 1] += lam * c;
        }
    }
    out
}

/// `A3 = −‖g_N‖² + Σ λ_k · (quadratic part of h_k)` as a matrix over
/// `x_0, …, x_N`.
pub fn aggregate_a3(ms: &MultiplierSet) -> Result<QuadForm, CertificateError> {
    Ok(QuadForm::from_matrix(&aggregate_a3_dd(ms)?.to_f64()))
}

/// [`aggregate_a3`] before rounding to `f64`.
pub fn aggregate_a3_dd(ms: &MultiplierSet) -> Result<DdMatrix, CertificateError> {
    for (k, r) in f_cancellation_dd(ms).iter().enumerate() {
        if r.abs().to_f64() > CANCELLATION_TOL {
            return Err(CertificateError::Cancellation {
                index: k + 1,
                residual: r.to_f64(),
            });
        }
    }
    let n = ms.sched.len();
    let mut m = DdMatrix::zeros(n + 1);
    let inv = Dd::ONE / ms.sched.alpha_dd(n);
    let g_n = [(n - 1, inv), (n, -inv)];
    m.add_sym_outer(-Dd::ONE, &g_n, &g_n);
    for (&id, &lam) in &ms.values {
        let (u, v, _) = constraint_terms(&ms.sched, id);
        m.add_sym_outer(lam, &u, &v);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosSquare {
    pub weight: f64,
    pub coeffs: Vec<f64>,
}

/// `Σ weight · ‖Σ_i coeffs_i x_i‖²`
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SosDecomposition {
    pub case: SosCase,
    pub separator: usize,
    pub squares: Vec<SosSquare>,
    #[serde(skip)]
    exact: Vec<(Dd, Sparse)>,
}

impl SosDecomposition {
    pub fn len(&self) -> usize {
        self.squares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.squares.is_empty()
    }

    pub fn min_weight(&self) -> f64 {
        self.exact.iter().map(|(w, _)| w.to_f64()).fold(f64::INFINITY, f64::min)
    }

    /// `Σ w c cᵀ` in double-double.
    pub fn reconstruct_dd(&self, dim: usize) -> DdMatrix {
        let mut m = DdMatrix::zeros(dim);
        for (w, c) in &self.exact {
            m.add_sym_outer(*w, c, c);
        }
        m
    }

    pub fn reconstruct(&self, dim: usize) -> Matrix {
        self.reconstruct_dd(dim).to_f64()
    }

    /// One `(weight, c_0, …, c_N)` row per square.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.squares
            .iter()
            .map(|q| std::iter::once(q.weight).chain(q.coeffs.iter().copied()).collect())
            .collect()
    }
}

/// The explicit sum-of-squares form of `A3` for the case selected by the
/// separator. Zero-weight squares are kept.
pub fn sos_decompose(sched: &StepSchedule) -> SosDecomposition {
    let n = sched.len();
    let sep = sched.separator();
    let s = sep.index();
    let case = sep.case(n);
    let a = |i: usize, j: usize| sched.sum_dd(i, j);
    let al = |i: usize| sched.alpha_dd(i);
    let t = a(1, n);
    let two = Dd::new(2.0);
    let mut sq: Vec<(Dd, Sparse)> = Vec::new();

    // x_{i−1}/α_i − (α_i + α_{i+1})/(α_i α_{i+1}) x_i + x_{i+1}/α_{i+1}
    let tele = |i: usize| {
        vec![
            (i - 1, Dd::ONE / al(i)),
            (i, -(al(i) + al(i + 1)) / (al(i) * al(i + 1))),
            (i + 1, Dd::ONE / al(i + 1)),
        ]
    };
    // x_i/α_{i+1:N} − x_{i+1}/α_{i+2:N}, weight (α_{i+1}T + 2α_{1:i}α_{i+2:N})/(Tα_{i+1})
    let chain = |i: usize| {
        (
            (al(i + 1) * t + two * a(1, i) * a(i + 2, n)) / (t * al(i + 1)),
            vec![(i, Dd::ONE / a(i + 1, n)), (i + 1, -Dd::ONE / a(i + 2, n))],
        )
    };
    let lead = || (Dd::ONE, vec![(0, Dd::ONE / t), (1, -Dd::ONE / a(2, n))]);

    match case {
        SosCase::III => {
            if n >= 2 {
                sq.push(lead());
                for i in 1..n - 1 {
                    sq.push(chain(i));
                }
            }
            sq.push(((al(n) - a(1, n - 1)) / (t * al(n) * al(n)), vec![(n, Dd::ONE)]));
        }
        SosCase::I => {
            let (a1, a2) = (al(1), al(2));
            sq.push((
                Dd::ONE,
                vec![
                    (0, Dd::ONE / t),
                    (1, -(a1 - a(3, n)) / (a1 * a2)),
                    (2, (a1 - a(2, n)) / (a1 * a2)),
                ],
            ));
            sq.push(((a1 - a(2, n)) / (t * a1 * a1 * a2 * a2), vec![(1, a(3, n)), (2, -a(2, n))]));
            for i in s + 1..n {
                sq.push(((a(1, i) - a(i + 1, n)) / t, tele(i)));
            }
        }
        SosCase::II => {
            sq.push(lead());
            for i in 1..s - 1 {
                sq.push(chain(i));
            }
            let d = al(s) * t + two * a(1, s - 1) * a(s + 1, n);
            let gap = a(1, s) - a(s + 1, n);
            sq.push((
                d / (t * al(s)),
                vec![
                    (s - 1, Dd::ONE / a(s, n)),
                    (s, -(al(s + 1) * t + a(s, n) * gap) / (al(s + 1) * d)),
                    (s + 1, a(s, n) * gap / (al(s + 1) * d)),
                ],
            ));
            let k = s;
            sq.push((
                gap * (a(s, n) - a(1, s - 1)) / (t * al(s) * al(s + 1) * al(s + 1) * d),
                vec![(k, a(k + 2, n)), (k + 1, -a(k + 1, n))],
            ));
            for i in s + 1..n {
                sq.push(((a(1, i) - a(i + 1, n)) / t, tele(i)));
            }
        }
    }

    let squares = sq
        .iter()
        .map(|(w, c)| {
            let mut coeffs = vec![0.0; n + 1];
            for &(i, v) in c {
                coeffs[i] += v.to_f64();
            }
            SosSquare {
                weight: w.to_f64(),
                coeffs,
            }
        })
        .collect();
    SosDecomposition {
        case,
        separator: s,
        squares,
        exact: sq,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateResiduals {
    pub min_multiplier: f64,
    /// `max_i |Σ λ · (f_i coefficient)|`
    pub cancellation: f64,
    pub min_eigenvalue: f64,
    /// Entrywise `max |Σ w c cᵀ − A3|`, before rounding.
    pub sos_error: f64,
    pub min_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub alphas: Vec<f64>,
    pub separator: usize,
    pub case: SosCase,
    pub multipliers_ok: bool,
    pub cancellation_ok: bool,
    pub psd_ok: bool,
    pub sos_match_ok: bool,
    /// `1/α_{1:N}²`, the certified bound on `‖g_N‖²` at radius 1.
    pub bound: f64,
    pub residuals: CertificateResiduals,
    /// Names of the failing checks, empty when everything passes.
    pub failures: Vec<String>,
    pub radius_scaling: String,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// `R/α_{1:N}`, the certified bound on `‖g_N‖_{B⁻¹}` at radius `R`.
    pub fn bound_for_radius(&self, radius: f64) -> f64 {
        radius * self.bound.sqrt()
    }
}

/// Runs the multiplier, cancellation, PSD and SOS checks for `sched`.
pub fn certify(sched: &StepSchedule) -> CertificateReport {
    let n = sched.len();
    let ms = multipliers(sched);
    let sep = ms.separator();
    let min_multiplier = ms.min_value();
    let multipliers_ok = ms.values.values().all(|v| !v.is_sign_negative()) && ms.len() == 3 * n;

    let cancellation = f_cancellation_dd(&ms).iter().map(|r| r.abs().to_f64()).fold(0.0, f64::max);
    let cancellation_ok = cancellation <= CANCELLATION_TOL;

    let (min_eigenvalue, sos_error, min_weight) = match aggregate_a3_dd(&ms) {
        Ok(a3) => {
            let min_eig = a3
                .to_f64()
                .symmetric_eigen()
                .map(|e| e.min())
                .unwrap_or(f64::NEG_INFINITY);
            let sos = sos_decompose(sched);
            let err = sos.reconstruct_dd(n + 1).max_abs_diff(&a3);
            (min_eig, err, sos.min_weight())
        }
        Err(_) => (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
    };
    let psd_ok = min_eigenvalue >= -PSD_TOL;
    let sos_match_ok = sos_error <= SOS_TOL && min_weight >= 0.0;

    let mut failures = Vec::new();
    for (ok, name) in [
        (multipliers_ok, "multipliers"),
        (cancellation_ok, "cancellation"),
        (psd_ok, "psd"),
        (sos_match_ok, "sos_match"),
    ] {
        if !ok {
            failures.push(name.to_string());
        }
    }
    let t = sched.total();
    CertificateReport {
        alphas: sched.alphas().to_vec(),
        separator: sep.index(),
        case: sep.case(n),
        multipliers_ok,
        cancellation_ok,
        psd_ok,
        sos_match_ok,
        bound: (Dd::ONE / (sched.sum_dd(1, n) * sched.sum_dd(1, n))).to_f64(),
        residuals: CertificateResiduals {
            min_multiplier,
            cancellation,
            min_eigenvalue,
            sos_error,
            min_weight,
        },
        failures,
        radius_scaling: format!(
            "scaling every iterate by R multiplies the objective by R^2: ||g_N||^2 <= R^2/{t}^2, i.e. ||g_N|| <= R/{t}"
        ),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("samples mix schedule lengths {0} and {1}")]
    MixedLengths(usize, usize),
    #[error("sample {0} has a non-finite bound")]
    BadSample(usize),
    #[error("system is rank deficient: two smallest eigenvalues {smallest:e} and {second:e} (ratio {ratio:e})")]
    RankDeficient { smallest: f64, second: f64, ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Ansatz {
    /// `n_0 / (d_0 + Σ d_i α_i)`: `N + 2` unknowns, `N + 1` samples.
    #[default]
    ConstantOverLinear,
    /// `(n_0 + Σ n_i α_i) / (d_0 + Σ d_i α_i)`: `2N + 2` unknowns.
    LinearOverLinear,
}

/// Recovered `bound(α) = (n_0 + Σ n_i α_i)/(d_0 + Σ d_i α_i)`, scaled so the
/// largest denominator coefficient is `+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCoefficients {
    /// `[n_0, n_1, …, n_N]`
    pub numerator: Vec<f64>,
    /// `[d_0, d_1, …, d_N]`
    pub denominator: Vec<f64>,
    /// `λ_min / λ_2` of the normal matrix; small means well determined.
    pub conditioning: f64,
    /// Root-mean-square of `numerator − bound · denominator` over the samples.
    pub residual: f64,
}

impl BoundCoefficients {
    pub fn evaluate(&self, alphas: &[f64]) -> f64 {
        let lin = |c: &[f64]| c[0] + c[1..].iter().zip(alphas).map(|(a, b)| a * b).sum::<f64>();
        lin(&self.numerator) / lin(&self.denominator)
    }
}

/// Least-squares fit of the linearized relation
/// `numerator(α) − bound · denominator(α) = 0` over the samples.
pub fn recover_bound_coefficients(samples: &[(StepSchedule, f64)], ansatz: Ansatz) -> Result<BoundCoefficients, RecoveryError> {
    let n = samples.first().map(|(s, _)| s.len()).unwrap_or(0);
    let (num_len, needed) = match ansatz {
        Ansatz::ConstantOverLinear => (1, n + 1),
        Ansatz::LinearOverLinear => (n + 1, 2 * n + 1),
    };
    if samples.len() < needed.max(1) {
        return Err(RecoveryError::TooFewSamples {
            needed: needed.max(1),
            got: samples.len(),
        });
    }
    let mut rows = Vec::with_capacity(samples.len());
    for (k, (s, b)) in samples.iter().enumerate() {
        if s.len() != n {
            return Err(RecoveryError::MixedLengths(n, s.len()));
        }
        if !b.is_finite() {
            return Err(RecoveryError::BadSample(k));
        }
        let mut row = vec![1.0];
        if num_len > 1 {
            row.extend_from_slice(s.alphas());
        }
        row.push(-b);
        row.extend(s.alphas().iter().map(|a| -b * a));
        rows.push(row);
    }
    let dim = rows[0].len();
    // column scaling keeps the normal matrix balanced
    let scale: Vec<f64> = (0..dim)
        .map(|j| {
            let c = rows.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
            if c > 0.0 {
                c
            } else {
                1.0
            }
        })
        .collect();
    let normal = Matrix::from_fn(dim, dim, |i, j| rows.iter().map(|r| r[i] / scale[i] * r[j] / scale[j]).sum());
    let eig = normal.symmetric_eigen().expect("normal matrix is symmetric");
    let (smallest, second) = (eig.values[0].max(0.0), eig.values[1]);
    let ratio = smallest / second;
    if !(second > 1e-13 * eig.max()) {
        return Err(RecoveryError::RankDeficient { smallest, second, ratio });
    }
    let v: Vec<f64> = eig.vector(0).iter().zip(&scale).map(|(a, s)| a / s).collect();
    let (num, den) = v.split_at(num_len);
    let pivot = den.iter().cloned().fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
    let mut numerator: Vec<f64> = num.iter().map(|x| x / pivot).collect();
    numerator.resize(n + 1, 0.0);
    let denominator: Vec<f64> = den.iter().map(|x| x / pivot).collect();
    let residual = (rows
        .iter()
        .map(|r| {
            let e: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / pivot;
            e * e
        })
        .sum::<f64>()
        / rows.len() as f64)
        .sqrt();
    Ok(BoundCoefficients {
        numerator,
        denominator,
        conditioning: ratio,
        residual,
    })
}
