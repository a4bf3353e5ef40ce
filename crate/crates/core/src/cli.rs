//! Command-line front end. Every command prints JSON (or CSV for
//! `run --format csv`) and maps outcomes onto exit codes:
//! 0 success, 1 verification failure, 2 usage error, 3 solver failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::certificate::{certify, multipliers, recover_bound_coefficients, sos_decompose, Ansatz};
use crate::families::Family;
use crate::linalg::Matrix;
use crate::pep::{build_pep, reduce_pep, ConstraintId};
use crate::ppa::{check_bounds, run_ppa, BoxIndicator, MaxAffine, Metric, ProxFunction, Quadratic, ScaledL1};
use crate::schedule::StepSchedule;
use crate::sdp::{self, rank_profile, SdpError};
use crate::worstcase::{activeness_audit, closed_form_trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Environment variable capping the worker threads of sweeps.
pub const THREADS_ENV: &str = "PPAPEP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ppapep", version, about = "Proximal point worst cases, PEP solves and dual certificates")]
pub struct Cli {
    /// Omit the timestamp so reruns are byte-identical.
    #[arg(long, global = true)]
    pub reproducible: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the proximal point algorithm and check both rate bounds.
    Run(RunArgs),
    /// Build, export or solve the performance-estimation SDP.
    Pep {
        #[command(subcommand)]
        command: PepCommand,
    },
    /// Verify the closed-form dual certificate for one schedule or a sweep.
    Certify(CertifyArgs),
    /// Slack of every PEP constraint at the extremal l1 trajectory.
    Audit(AuditArgs),
    /// Fit bound coefficients from sampled worst cases.
    Recover(RecoverArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    /// Comma-separated step lengths, or a path to a JSON file `{"alphas": [...]}`.
    #[arg(long, required_unless_present = "random_n", conflicts_with = "random_n")]
    pub alphas: Option<String>,
    /// Draw this many steps uniformly from (0, 1] instead.
    #[arg(long)]
    pub random_n: Option<usize>,
    /// Seed of the xoshiro256++ generator used by `--random-n`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value = "l1")]
    pub function: String,
    /// Family parameter: l1 weight, quadratic curvature, box half-width or
    /// max-affine slope.
    #[arg(long)]
    pub coeff: Option<f64>,
    /// Starting point, comma-separated. Defaults to the extremal start for l1.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Defaults to `‖x0 − x*‖_B`.
    #[arg(long)]
    pub radius: Option<f64>,
    /// A positive scalar, or a path to a JSON matrix.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
}

#[derive(Debug, Subcommand)]
pub enum PepCommand {
    /// Solve the SDP and compare with R/Σα.
    Solve(PepArgs),
    /// Write the SDP instance as JSON.
    Export(PepArgs),
}

#[derive(Debug, Args)]
pub struct PepArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = sdp::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = sdp::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Keep only the 3N constraints of the reduced PEP.
    #[arg(long)]
    pub reduced: bool,
    /// Drop a constraint, e.g. `f_nonneg(3)` or `cross(1,3)`. Repeatable.
    #[arg(long)]
    pub without: Vec<String>,
    /// Include the dual multipliers in the output.
    #[arg(long)]
    pub duals: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, conflicts_with_all = ["random_n", "sweep"], required_unless_present_any = ["random_n", "sweep"])]
    pub alphas: Option<String>,
    #[arg(long, conflicts_with = "sweep")]
    pub random_n: Option<usize>,
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub min_n: usize,
    #[arg(long, default_value_t = 15)]
    pub max_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Attach the multipliers and the sum-of-squares rows.
    #[arg(long)]
    pub details: bool,
    /// In a sweep, print every report instead of only the failing ones.
    #[arg(long)]
    pub full: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleSource {
    /// `R/Σα` evaluated on the extremal l1 trajectory.
    Closed,
    /// `√value` of the solved full PEP.
    Sdp,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Schedule length of every sample.
    #[arg(long)]
    pub n: usize,
    /// Defaults to the minimum the ansatz needs.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, value_enum, default_value_t = SampleSource::Closed)]
    pub source: SampleSource,
    /// Use a linear numerator as well.
    #[arg(long)]
    pub full_ansatz: bool,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn execute(cli: &Cli) -> Outcome {
    let r = cli.reproducible;
    match &cli.command {
        Command::Run(a) => cmd_run(a, r),
        Command::Pep {
            command: PepCommand::Solve(a),
        } => cmd_pep_solve(a, r),
        Command::Pep {
            command: PepCommand::Export(a),
        } => cmd_pep_export(a),
        Command::Certify(a) => cmd_certify(a, r),
        Command::Audit(a) => cmd_audit(a, r),
        Command::Recover(a) => cmd_recover(a, r),
    }
}

fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn parse_vector(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Failure::usage(format!("bad number `{t}`: {e}"))))
        .collect()
}

fn load_schedule(spec: &str) -> Result<StepSchedule, Failure> {
    let path = Path::new(spec);
    let parsed = if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let text = text.trim();
        if text.starts_with('{') {
            StepSchedule::from_json(text)
        } else {
            StepSchedule::parse_list(text)
        }
    } else {
        StepSchedule::parse_list(spec)
    };
    parsed.map_err(|e| Failure::usage(e.to_string()))
}

fn resolve_schedule(a: &ScheduleArgs) -> Result<StepSchedule, Failure> {
    match (&a.alphas, a.random_n) {
        (Some(s), _) => load_schedule(s),
        (None, Some(n)) => StepSchedule::random(n, &mut rng(a.seed)).map_err(|e| Failure::usage(e.to_string())),
        (None, None) => Err(Failure::usage("either --alphas or --random-n is required")),
    }
}

fn load_metric(spec: Option<&str>, dim: usize) -> Result<Metric, Failure> {
    let Some(spec) = spec else {
        return Ok(Metric::identity(dim));
    };
    let metric = if let Ok(c) = spec.parse::<f64>() {
        Metric::scalar(dim, c).map_err(|e| Failure::usage(e.to_string()))?
    } else {
        let text = fs::read_to_string(spec).map_err(|e| Failure::usage(format!("{spec}: {e}")))?;
        serde_json::from_str::<Metric>(&text).map_err(|e| Failure::usage(format!("{spec}: {e}")))?
    };
    if metric.dim() != dim {
        return Err(Failure::usage(format!("metric has order {}, x0 has dimension {dim}", metric.dim())));
    }
    Ok(metric)
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::usage(format!("{name} must be positive and finite, got {v}")))
    }
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match out {
        Some(p) => fs::File::create(p)
            .map(|f| Box::new(io::BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn emit(mut value: Value, reproducible: bool, out: Option<&Path>) -> Result<(), Failure> {
    if !reproducible {
        if let Value::Object(map) = &mut value {
            let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            map.insert("generated_at".into(), json!(now));
        }
    }
    let mut w = open_out(out)?;
    let text = serde_json::to_string_pretty(&value).expect("values serialize");
    writeln!(w, "{text}")
        .and_then(|_| w.flush())
        .map_err(|e| Failure::usage(format!("write failed: {e}")))
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure::usage(e.to_string()))
}

fn build_function(family: Family, coeff: Option<f64>, dim: usize) -> Result<Box<dyn ProxFunction>, Failure> {
    let c = positive("--coeff", coeff.unwrap_or(1.0))?;
    let bad = |e: crate::ppa::PpaError| Failure::usage(e.to_string());
    Ok(match family {
        Family::L1 => Box::new(ScaledL1::new(c, dim).map_err(bad)?),
        Family::Quad => Box::new(Quadratic::new(Matrix::identity(dim).scale(c), vec![0.0; dim]).map_err(bad)?),
        Family::Box => Box::new(BoxIndicator::new(vec![-c; dim], vec![c; dim]).map_err(bad)?),
        Family::MaxAffine => {
            let slopes: Vec<Vec<f64>> = (0..2 * dim)
                .map(|k| {
                    let mut a = vec![0.0; dim];
                    a[k / 2] = if k % 2 == 0 { c } else { -c };
                    a
                })
                .collect();
            Box::new(
                MaxAffine::new(slopes, vec![0.0; 2 * dim])
                    .and_then(|f| f.with_minimizer(vec![0.0; dim]))
                    .map_err(bad)?,
            )
        }
    })
}

fn cmd_run(a: &RunArgs, reproducible: bool) -> Outcome {
    let sched = resolve_schedule(&a.schedule)?;
    let family: Family = a.function.parse().map_err(Failure::usage)?;
    if let Some(r) = a.radius {
        positive("--radius", r)?;
    }
    let (function, x0, metric) = match (&a.x0, family) {
        (None, Family::L1) => {
            let r = a.radius.unwrap_or(1.0);
            let metric = load_metric(a.metric.as_deref(), 1)?;
            let b = metric.matrix()[(0, 0)];
            let coeff = a.coeff.unwrap_or(b.sqrt() * r / sched.total());
            (build_function(family, Some(coeff), 1)?, vec![-r / b.sqrt()], metric)
        }
        (None, _) => return Err(Failure::usage(format!("--x0 is required for --function {family}"))),
        (Some(s), _) => {
            let x0 = parse_vector(s)?;
            let metric = load_metric(a.metric.as_deref(), x0.len())?;
            (build_function(family, a.coeff, x0.len())?, x0, metric)
        }
    };
    let x_star = function.minimizer().expect("built-in functions carry a minimizer");
    let d: Vec<f64> = x0.iter().zip(&x_star).map(|(p, q)| p - q).collect();
    let radius = match a.radius {
        Some(r) => r,
        None => {
            let dist = metric.norm(&d);
            if dist > 0.0 {
                dist
            } else {
                1.0
            }
        }
    };
    let traj = run_ppa(function.as_ref(), &sched, &x0, &metric, radius).map_err(|e| Failure::usage(e.to_string()))?;
    let report = check_bounds(&traj).map_err(|e| Failure::usage(e.to_string()))?;
    match a.format {
        OutputFormat::Json => emit(
            json!({
                "command": "run",
                "function": family.name(),
                "trajectory": traj,
                "subgradient_norms": traj.subgradient_norms(),
                "bounds": report,
            }),
            reproducible,
            a.out.as_deref(),
        )?,
        OutputFormat::Csv => {
            let w = open_out(a.out.as_deref())?;
            traj.write_csv(w).map_err(|e| Failure::usage(e.to_string()))?;
        }
    }
    Ok(if report.ok() { EXIT_OK } else { EXIT_VERIFY })
}

fn pep_instance(a: &PepArgs) -> Result<(StepSchedule, crate::pep::SdpInstance), Failure> {
    let sched = resolve_schedule(&a.schedule)?;
    positive("--radius", a.radius)?;
    let full = build_pep(&sched, a.radius).map_err(|e| Failure::usage(e.to_string()))?;
    let mut inst = if a.reduced { reduce_pep(&full) } else { full };
    if !a.without.is_empty() {
        let drop = a
            .without
            .iter()
            .map(|s| s.parse::<ConstraintId>().map_err(|e| Failure::usage(format!("--without {s}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        inst = inst.without(&drop);
    }
    Ok((sched, inst))
}

fn cmd_pep_export(a: &PepArgs) -> Outcome {
    let (_, inst) = pep_instance(a)?;
    let mut w = open_out(a.out.as_deref())?;
    writeln!(w, "{}", inst.to_json())
        .and_then(|_| w.flush())
        .map_err(|e| Failure::usage(format!("write failed: {e}")))?;
    Ok(EXIT_OK)
}

fn cmd_pep_solve(a: &PepArgs, reproducible: bool) -> Outcome {
    let (sched, inst) = pep_instance(a)?;
    positive("--tol", a.tol)?;
    let bound = a.radius / sched.total();
    match sdp::solve(&inst, a.tol, a.max_iter) {
        Ok(sol) => {
            let root = sol.objective.max(0.0).sqrt();
            let mut v = json!({
                "command": "pep solve",
                "alphas": sched.alphas(),
                "R": a.radius,
                "constraints": inst.len(),
                "reduced": a.reduced,
                "value": sol.objective,
                "dual_value": sol.dual_objective,
                "sqrt_value": root,
                "bound": bound,
                "gap": root - bound,
                "rank_profile": rank_profile(&sol, 1e-5),
                "eigenvalues": sol.eigenvalues,
                "iterations": sol.iterations,
                "residuals": sol.residuals,
            });
            if a.duals {
                v["duals"] = serde_json::to_value(&sol.duals).expect("duals serialize");
            }
            emit(v, reproducible, a.out.as_deref())?;
            Ok(EXIT_OK)
        }
        Err(e) => {
            let residuals = match &e {
                SdpError::MaxIterationsExceeded { best, .. } => Some(*best),
                _ => None,
            };
            emit(
                json!({
                    "command": "pep solve",
                    "alphas": sched.alphas(),
                    "error": e.to_string(),
                    "residuals": residuals,
                }),
                reproducible,
                a.out.as_deref(),
            )?;
            eprintln!("error: {e}");
            Ok(EXIT_SOLVER)
        }
    }
}

fn certify_details(sched: &StepSchedule) -> Value {
    let mut v = serde_json::to_value(certify(sched)).expect("report serializes");
    v["multipliers"] = serde_json::to_value(multipliers(sched)).expect("multipliers serialize")["multipliers"].clone();
    v["sos"] = json!(sos_decompose(sched).rows());
    v
}

fn cmd_certify(a: &CertifyArgs, reproducible: bool) -> Outcome {
    if !a.sweep {
        let sched = match (&a.alphas, a.random_n) {
            (Some(s), _) => load_schedule(s)?,
            (None, Some(n)) => StepSchedule::random(n, &mut rng(a.seed)).map_err(|e| Failure::usage(e.to_string()))?,
            (None, None) => return Err(Failure::usage("certify needs --alphas, --random-n or --sweep")),
        };
        let report = certify(&sched);
        let mut v = if a.details {
            certify_details(&sched)
        } else {
            serde_json::to_value(&report).expect("report serializes")
        };
        v["command"] = json!("certify");
        emit(v, reproducible, a.out.as_deref())?;
        if !report.passed() {
            eprintln!("certificate failed: {}", report.failures.join(", "));
        }
        return Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFY });
    }

    if a.min_n == 0 || a.min_n > a.max_n {
        return Err(Failure::usage(format!("need 1 <= --min-n <= --max-n, got {} and {}", a.min_n, a.max_n)));
    }
    let mut r = rng(a.seed);
    let schedules: Vec<StepSchedule> = (0..a.count)
        .map(|_| {
            let n = rand::Rng::random_range(&mut r, a.min_n..=a.max_n);
            StepSchedule::random(n, &mut r).expect("n >= 1")
        })
        .collect();
    let reports: Vec<_> = thread_pool()?.install(|| schedules.par_iter().map(certify).collect());
    let passed = reports.iter().filter(|r| r.passed()).count();
    let worst = |f: fn(&crate::certificate::CertificateReport) -> f64| reports.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let failing: Vec<Value> = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.passed())
        .map(|(i, r)| json!({"index": i, "report": r}))
        .collect();
    let mut v = json!({
        "command": "certify sweep",
        "seed": a.seed,
        "count": a.count,
        "min_n": a.min_n,
        "max_n": a.max_n,
        "passed": passed,
        "failed": a.count - passed,
        "worst": {
            "cancellation": worst(|r| r.residuals.cancellation),
            "sos_error": worst(|r| r.residuals.sos_error),
            "neg_min_eigenvalue": worst(|r| -r.residuals.min_eigenvalue),
            "neg_min_multiplier": worst(|r| -r.residuals.min_multiplier),
        },
        "failures": failing,
    });
    if a.full {
        v["reports"] = serde_json::to_value(&reports).expect("reports serialize");
    }
    emit(v, reproducible, a.out.as_deref())?;
    Ok(if passed == a.count { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_audit(a: &AuditArgs, reproducible: bool) -> Outcome {
    let sched = resolve_schedule(&a.schedule)?;
    positive("--radius", a.radius)?;
    let rep = activeness_audit(&sched, a.radius).map_err(|e| Failure::usage(e.to_string()))?;
    let cf = closed_form_trajectory(&sched, a.radius);
    let ok = rep.all_reduced_active() && rep.dropped_feasible();
    let mut v = serde_json::to_value(&rep).expect("audit serializes");
    v["command"] = json!("audit");
    v["all_reduced_active"] = json!(rep.all_reduced_active());
    v["dropped_feasible"] = json!(rep.dropped_feasible());
    v["dropped_strict"] = json!(rep.dropped_strict());
    v["closed_form"] = serde_json::to_value(&cf).expect("closed form serializes");
    emit(v, reproducible, a.out.as_deref())?;
    Ok(if ok { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_recover(a: &RecoverArgs, reproducible: bool) -> Outcome {
    if a.n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    positive("--radius", a.radius)?;
    let ansatz = if a.full_ansatz {
        Ansatz::LinearOverLinear
    } else {
        Ansatz::ConstantOverLinear
    };
    let count = a.count.unwrap_or(match ansatz {
        Ansatz::ConstantOverLinear => a.n + 1,
        Ansatz::LinearOverLinear => 2 * a.n + 1,
    });
    let mut r = rng(a.seed);
    let schedules: Vec<StepSchedule> = (0..count)
        .map(|_| StepSchedule::random(a.n, &mut r).expect("n >= 1"))
        .collect();
    let samples: Vec<(StepSchedule, f64)> = match a.source {
        SampleSource::Closed => schedules
            .into_iter()
            .map(|s| {
                let b = closed_form_trajectory(&s, a.radius).final_residual(&s);
                (s, b)
            })
            .collect(),
        SampleSource::Sdp => {
            let solved: Result<Vec<_>, SdpError> = thread_pool()?.install(|| {
                schedules
                    .into_par_iter()
                    .map(|s| {
                        let inst = build_pep(&s, a.radius).expect("radius checked");
                        let v = sdp::solve(&inst, a.tol, sdp::DEFAULT_MAX_ITER)?.objective;
                        Ok((s, v.max(0.0).sqrt()))
                    })
                    .collect()
            });
            match solved {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(EXIT_SOLVER);
                }
            }
        }
    };
    match recover_bound_coefficients(&samples, ansatz) {
        Ok(c) => {
            emit(
                json!({
                    "command": "recover",
                    "n": a.n,
                    "samples": samples.len(),
                    "R": a.radius,
                    "coefficients": c,
                }),
                reproducible,
                a.out.as_deref(),
            )?;
            Ok(EXIT_OK)
        }
        Err(e) => {
            emit(json!({"command": "recover", "error": e.to_string()}), reproducible, a.out.as_deref())?;
            eprintln!("error: {e}");
            Ok(EXIT_VERIFY)
        }
    }
}
