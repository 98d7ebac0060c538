//! Command-line entry point: argument parsing, thread policy, JSON/CSV output, exit codes.
//!
//! Exit codes: 0 when every gated check passes, 1 on a failed check or runtime error,
//! 2 on a usage or configuration error.

use crate::asymptotics::{experiment, ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::models::{corner_profile, run_ensemble_at, step, trajectory_seed, ModelSpec, Observable, SystemState};
use crate::observables::{identity_check, statistical_identity_suite, tiny_identity_suite, IdentityForm, IdentityOptions, ObservableSpec};
use crate::report::Report;
use crate::specfun::{self, EllipticContext, SpecfunSuite, C64};
use crate::symfun::{self, SymfunSuite};
use crate::weights::{self, WeightFamily, WeightGrid};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "DYNVERTEX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dynvertex", version, about = "Dynamical stochastic higher spin vertex models: weights, simulation, moment identities, asymptotics")]
pub struct Cli {
    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stochasticity and oracle-chain checks of the vertex weights.
    CheckWeights(CheckWeightsArgs),
    /// Monte Carlo ensembles of a particle or corner growth model.
    Simulate(SimulateArgs),
    /// Moment identity by Monte Carlo, exact enumeration and contour quadrature.
    VerifyIdentity(VerifyIdentityArgs),
    /// Symmetric-function structure of the weight functions.
    Symfun {
        #[command(subcommand)]
        command: SymfunCommand,
    },
    /// Scaling-limit experiments.
    Asymptotics(AsymptoticsArgs),
    /// Special-function identities and evaluation.
    Specfun {
        #[command(subcommand)]
        command: SpecfunCommand,
    },
}

#[derive(Debug, Args)]
pub struct CheckWeightsArgs {
    /// Weight families to check.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "fused,sigma,psi,phi")]
    pub family: Vec<WeightFamily>,
    /// Grid JSON (file path or inline object), or `default`.
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Tolerance override; defaults to 1e-9 for `fused` and 1e-10 otherwise.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed override for the grid.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SimModel {
    General,
    Qhahn,
    Pep,
    AsymPep,
    Corner,
    CornerDyn,
}

impl SimModel {
    fn tag(self) -> &'static str {
        match self {
            SimModel::General => "general",
            SimModel::Qhahn => "qhahn",
            SimModel::Pep => "jgamma_pep",
            SimModel::AsymPep => "asym_pep",
            SimModel::Corner => "corner",
            SimModel::CornerDyn => "corner_dyn",
        }
    }

    fn defaults(self) -> Value {
        match self {
            SimModel::General => json!({}),
            SimModel::Qhahn => json!({ "q": 0.5, "delta": -0.5, "b": [8.0, 16.0, 8.0], "J": [1] }),
            SimModel::Pep => json!({ "J": 1, "gamma": null }),
            SimModel::AsymPep => json!({ "q": 0.25, "delta": 0.0 }),
            SimModel::Corner => json!({ "p": 0.5 }),
            SimModel::CornerDyn => json!({ "gamma": 3.0 }),
        }
    }
}

#[derive(Debug, Args)]
#[command(after_help = "CSV outputs:\n  --out *.csv   time,observable,mean,stderr,n_samples\n  --dump        particle models: trajectory,time,site,occupancy (nonzero sites only)\n                corner models:   trajectory,time,x,height")]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: SimModel,
    /// Model parameters as JSON (file path or inline object); missing keys take defaults.
    /// `general` has no defaults: q, delta, u, xi, s (complex as [re, im]) and J are required.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Observables: one, particles, current:X, occupancy:X, height:X.
    #[arg(long, value_delimiter = ',', default_value = "particles")]
    pub observables: Vec<String>,
    /// Extra checkpoint times; `--steps` is always recorded.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Vec<usize>,
    /// Report path: `.csv` writes the estimate table, anything else JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trajectory dump path (CSV).
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Number of trajectories in the dump.
    #[arg(long, default_value_t = 1)]
    pub dump_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum IdentitySuite {
    /// k = 1, N <= 3 exact-vs-quadrature grid.
    Tiny,
    /// N = 10 Monte Carlo-vs-quadrature grid.
    Statistical,
}

#[derive(Debug, Args)]
pub struct VerifyIdentityArgs {
    /// Preset grid; replaces the single-spec flags.
    #[arg(long, value_enum, conflicts_with_all = ["form", "k", "n", "x", "q", "delta", "j", "b", "gamma"])]
    pub suite: Option<IdentitySuite>,
    #[arg(long, value_enum)]
    pub form: Option<IdentityForm>,
    /// Number of factors; a single `--x` is repeated `k` times.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Sites, nonincreasing.
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<usize>,
    /// q-Hahn `q`.
    #[arg(long)]
    pub q: Option<f64>,
    /// Dynamical parameter; 0 is the non-dynamical model.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Per-row `J` (q-Hahn) or the single `J` (PEP).
    #[arg(long = "J", value_delimiter = ',')]
    pub j: Vec<u32>,
    /// q-Hahn `b` list; defaults to `(B, B/q, B)` with `B = q^{-(2 + max J)}`.
    #[arg(long, value_delimiter = ',')]
    pub b: Vec<f64>,
    /// PEP `gamma`; omitted means `gamma = infinity`.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip exact enumeration.
    #[arg(long)]
    pub no_exact: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SymfunCommand {
    /// Run the randomized symmetric-function suites.
    Verify {
        #[arg(long, value_enum, value_delimiter = ',', default_value = "symmetry,branching,fusion,stochastic-b")]
        suite: Vec<SymfunSuite>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[command(after_help = "CSV profile columns (--csv):\n  heat            s,site,H,mean_m<m>,stderr_m<m>\n  gamma           T,m,estimate,relative_error,exact_site_form,exact_site_relative_error\n  kpz-exponent, f-collapse, asym-pep\n                  eta,T,site,m,mean_over_T,mean_over_T_stderr,std,std_stderr,normalized_std,normalized_mean_shift\n  corner-quartic  m,estimate,stderr,target")]
pub struct AsymptoticsArgs {
    #[arg(long, value_enum)]
    pub experiment: ExperimentKind,
    /// Experiment JSON (file path or inline object), or `default`.
    #[arg(long, default_value = "default")]
    pub config: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Profile table for plotting.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpecfunFn {
    /// `theta_1(z)`; args: z.
    Theta1,
    /// `f(z)`; args: z.
    F,
    /// `(a; q)_k`; args: a, q, k.
    QPochhammer,
    /// `(a)_k`; args: a, k.
    RationalPochhammer,
    /// `[a]_k`; args: a, k.
    EllipticPochhammer,
}

#[derive(Debug, Subcommand)]
pub enum SpecfunCommand {
    /// Run the randomized identity suites.
    Verify {
        #[arg(long, value_enum, value_delimiter = ',', default_value = "q-pochhammer,elliptic-pochhammer,riemann,rogers,jackson")]
        suite: Vec<SpecfunSuite>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one function (debugging aid).
    #[command(hide = true)]
    Eval {
        #[arg(long = "fn", value_enum)]
        function: SpecfunFn,
        /// Complex arguments such as `0.3`, `1+2i`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        args: Vec<String>,
        /// Modular parameter; omitted means trigonometric mode.
        #[arg(long)]
        tau: Option<String>,
        #[arg(long, default_value = "0.05")]
        eta: String,
    },
}

/// Runtime fields, excluded from reproducibility comparisons.
#[derive(Debug, Serialize)]
pub struct Runtime {
    pub started_unix: f64,
    pub wall_seconds: f64,
    pub threads: usize,
}

/// Document written by every subcommand.
#[derive(Debug, Serialize)]
pub struct Envelope {
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub thread_policy: &'static str,
    pub pass: bool,
    pub reports: Vec<Report>,
    pub runtime: Runtime,
}

/// The envelope without its `runtime` field.
pub fn reproducible_part(doc: &Value) -> Value {
    let mut d = doc.clone();
    if let Some(o) = d.as_object_mut() {
        o.remove("runtime");
    }
    d
}

struct Outcome {
    command: String,
    config: Value,
    seed: Option<u64>,
    reports: Vec<Report>,
    out: Option<PathBuf>,
    csv: Vec<(PathBuf, String)>,
    /// Plain-text output instead of an envelope.
    raw: Option<String>,
}

impl Outcome {
    fn new(command: &str, config: Value, seed: Option<u64>, reports: Vec<Report>, out: Option<PathBuf>) -> Self {
        Self { command: command.into(), config, seed, reports, out, csv: Vec::new(), raw: None }
    }
}

/// Parses `argv` (including the program name), runs, writes outputs and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code of a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InadmissibleParameters(_) | Error::OutOfDomain(_) | Error::ContourInfeasible(_) => 2,
        _ => 1,
    }
}

/// Worker count: `DYNVERTEX_THREADS` when set, else rayon's default; 1 when deterministic.
pub fn thread_count(deterministic: bool) -> Result<usize> {
    if deterministic {
        return Ok(1);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let threads = thread_count(cli.deterministic)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::Config(e.to_string()))?;
    let parallel = !cli.deterministic;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let outcome = pool.install(|| run(cli.command, parallel))?;
    if let Some(text) = outcome.raw {
        println!("{text}");
        return Ok(0);
    }
    let pass = outcome.reports.iter().all(Report::pass);
    let env = Envelope {
        version: env!("CARGO_PKG_VERSION"),
        command: outcome.command,
        config: outcome.config,
        seed: outcome.seed,
        thread_policy: if cli.deterministic { "deterministic-single" } else { "parallel" },
        pass,
        reports: outcome.reports,
        runtime: Runtime { started_unix: started, wall_seconds: clock.elapsed().as_secs_f64(), threads },
    };
    for (path, text) in &outcome.csv {
        write_file(path, text)?;
    }
    let doc = serde_json::to_string_pretty(&env).map_err(|e| Error::Config(e.to_string()))?;
    match &outcome.out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => {}
        Some(p) => write_file(p, &(doc + "\n"))?,
        None => println!("{doc}"),
    }
    summarize(&env);
    Ok(if pass { 0 } else { 1 })
}

fn summarize(env: &Envelope) {
    for r in &env.reports {
        let failed = r.checks.iter().filter(|c| !c.pass).count();
        let worst = r.worst().map(|c| format!(", worst {} residual {:.3e} tol {:.3e}", c.name, c.residual, c.tolerance)).unwrap_or_default();
        eprintln!("{} {}: {} checks, {} failed{}", if r.pass() { "PASS" } else { "FAIL" }, r.suite, r.checks.len(), failed, worst);
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Inline JSON object, file path, or `default` (None).
fn json_arg(arg: &str) -> Result<Option<String>> {
    let t = arg.trim();
    if t == "default" {
        Ok(None)
    } else if t.starts_with('{') {
        Ok(Some(t.to_string()))
    } else {
        std::fs::read_to_string(t).map(Some).map_err(|e| Error::Config(format!("{t}: {e}")))
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn run(command: Command, parallel: bool) -> Result<Outcome> {
    match command {
        Command::CheckWeights(a) => check_weights(a),
        Command::Simulate(a) => simulate(a, parallel),
        Command::VerifyIdentity(a) => verify_identity(a, parallel),
        Command::Symfun { command: SymfunCommand::Verify { suite, seed, out } } => {
            let reports = suite.iter().map(|s| symfun::verify_suite(*s, seed)).collect::<Result<Vec<_>>>()?;
            Ok(Outcome::new("symfun verify", json!({ "suite": suite }), Some(seed), reports, out))
        }
        Command::Asymptotics(a) => asymptotics(a, parallel),
        Command::Specfun { command: SpecfunCommand::Verify { suite, seed, out } } => {
            let reports = suite.iter().map(|s| specfun::verify_suite(*s, seed)).collect::<Result<Vec<_>>>()?;
            Ok(Outcome::new("specfun verify", json!({ "suite": suite }), Some(seed), reports, out))
        }
        Command::Specfun { command: SpecfunCommand::Eval { function, args, tau, eta } } => specfun_eval(function, &args, tau.as_deref(), &eta),
    }
}

fn check_weights(a: CheckWeightsArgs) -> Result<Outcome> {
    let mut grid: WeightGrid = match json_arg(&a.grid)? {
        None => WeightGrid::default(),
        Some(t) => serde_json::from_str(&t).map_err(|e| Error::Config(format!("grid: {e}")))?,
    };
    if let Some(s) = a.seed {
        grid.seed = s;
    }
    let mut reports = Vec::new();
    for f in &a.family {
        reports.push(weights::verify_suite(*f, &grid, a.tol.unwrap_or_else(|| f.default_tol()))?);
    }
    let config = json!({ "family": a.family, "grid": grid, "tol": a.tol });
    Ok(Outcome::new("check-weights", config, Some(grid.seed), reports, a.out))
}

/// Resolves `--model` and `--config` into a model spec.
pub fn resolve_model(model: SimModel, config: Option<&str>) -> Result<ModelSpec> {
    let mut v = model.defaults();
    if let Some(arg) = config {
        if let Some(text) = json_arg(arg)? {
            let user: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("model config: {e}")))?;
            let Value::Object(m) = user else { return Err(Error::Config("model config must be a JSON object".into())) };
            for (k, val) in m {
                if k == "model" && val != json!(model.tag()) {
                    return Err(Error::Config(format!("config is for model {val}, not {}", model.tag())));
                }
                v[k] = val;
            }
        }
    }
    v["model"] = json!(model.tag());
    let spec: ModelSpec = serde_json::from_value(v).map_err(|e| Error::Config(format!("model config: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn simulate(a: SimulateArgs, parallel: bool) -> Result<Outcome> {
    let spec = resolve_model(a.model, a.config.as_deref())?;
    if a.samples == 0 {
        return Err(Error::Config("--samples must be positive".into()));
    }
    let observables = a.observables.iter().map(|s| s.parse::<Observable>()).collect::<Result<Vec<_>>>()?;
    let mut cps = a.checkpoints.clone();
    cps.push(a.steps);
    let res = run_ensemble_at(&spec, &cps, a.samples, a.seed, &observables, parallel)?;
    let mut rows = Vec::new();
    let mut csv = String::from("time,observable,mean,stderr,n_samples\n");
    for (c, &t) in res.checkpoints.iter().enumerate() {
        for (o, obs) in a.observables.iter().enumerate() {
            let e = &res.estimates[c][o];
            rows.push(json!({ "time": t, "observable": obs, "mean": e.mean, "stderr": e.stderr, "n_samples": e.n_samples }));
            csv.push_str(&format!("{t},{obs},{},{},{}\n", e.mean, e.stderr, e.n_samples));
        }
    }
    let mut rep = Report::new("simulate");
    rep.diagnostic("estimates", Value::Array(rows));
    rep.diagnostic("clamped_weights", json!(res.clamped));
    let config = json!({ "model": spec, "steps": a.steps, "samples": a.samples, "observables": observables, "checkpoints": res.checkpoints });
    let mut out = Outcome::new("simulate", config, Some(a.seed), vec![rep], a.out.clone());
    if let Some(p) = a.out.as_ref().filter(|p| p.extension().is_some_and(|e| e == "csv")) {
        out.csv.push((p.clone(), csv));
    }
    if let Some(p) = a.dump {
        out.csv.push((p, dump_trajectories(&spec, a.steps, a.dump_count, a.seed)?));
    }
    Ok(out)
}

/// Per-step CSV of the first `count` trajectories of the ensemble.
pub fn dump_trajectories(spec: &ModelSpec, steps: usize, count: usize, seed: u64) -> Result<String> {
    let corner = matches!(spec, ModelSpec::Corner { .. } | ModelSpec::CornerDyn { .. });
    let mut s = String::from(if corner { "trajectory,time,x,height\n" } else { "trajectory,time,site,occupancy\n" });
    for i in 0..count {
        let mut st = SystemState::new(spec, trajectory_seed(seed, i as u64));
        while st.time < steps {
            step(&mut st, spec)?;
            if corner {
                for (x, h) in corner_profile(&st) {
                    s.push_str(&format!("{i},{},{x},{h}\n", st.time));
                }
            } else {
                for (k, &n) in st.occupancy.iter().enumerate().filter(|(_, n)| **n > 0) {
                    s.push_str(&format!("{i},{},{},{n}\n", st.time, k + 1));
                }
            }
        }
    }
    Ok(s)
}

/// Builds the identity spec from single-spec flags.
pub fn identity_spec(a: &VerifyIdentityArgs) -> Result<ObservableSpec> {
    let missing = |f: &str| Error::Config(format!("verify-identity needs --{f} (or --suite)"));
    let form = a.form.ok_or_else(|| missing("form"))?;
    let n = a.n.ok_or_else(|| missing("N"))?;
    if a.x.is_empty() {
        return Err(missing("x"));
    }
    let x = match (a.k, a.x.len()) {
        (Some(k), 1) => vec![a.x[0]; k],
        (Some(k), l) if k != l => return Err(Error::Config(format!("--k {k} but {l} sites given"))),
        _ => a.x.clone(),
    };
    let j = if a.j.is_empty() { vec![1] } else { a.j.clone() };
    Ok(match form {
        IdentityForm::Qhahn => {
            let q = a.q.ok_or_else(|| missing("q"))?;
            let b = if a.b.is_empty() {
                let big = q.powi(-(2 + *j.iter().max().expect("nonempty") as i32));
                vec![big, big / q, big]
            } else {
                a.b.clone()
            };
            ObservableSpec::qhahn(q, a.delta.unwrap_or(0.0), b, j, x, n)
        }
        IdentityForm::Pep => {
            if j.len() != 1 || a.q.is_some() || a.delta.is_some() || !a.b.is_empty() {
                return Err(Error::Config("the PEP form takes a single --J and optional --gamma only".into()));
            }
            ObservableSpec::pep(j[0], a.gamma, x, n)
        }
    })
}

fn verify_identity(a: VerifyIdentityArgs, parallel: bool) -> Result<Outcome> {
    match a.suite {
        Some(IdentitySuite::Tiny) => Ok(Outcome::new("verify-identity", json!({ "suite": "tiny" }), None, vec![tiny_identity_suite()?], a.out)),
        Some(IdentitySuite::Statistical) => {
            let rep = statistical_identity_suite(a.samples, a.seed, parallel)?;
            Ok(Outcome::new("verify-identity", json!({ "suite": "statistical", "samples": a.samples }), Some(a.seed), vec![rep], a.out))
        }
        None => {
            let spec = identity_spec(&a)?;
            let opts = IdentityOptions { samples: a.samples, seed: a.seed, parallel, skip_exact: a.no_exact, ..Default::default() };
            let rep = identity_check(&spec, &opts)?;
            let config = json!({ "spec": spec, "samples": a.samples, "skip_exact": a.no_exact });
            Ok(Outcome::new("verify-identity", config, Some(a.seed), vec![rep], a.out))
        }
    }
}

fn asymptotics(a: AsymptoticsArgs, parallel: bool) -> Result<Outcome> {
    let config = match json_arg(&a.config)? {
        None => ExperimentConfig::default_for(a.experiment),
        Some(t) => ExperimentConfig::from_json(a.experiment, &t)?,
    };
    let rep = experiment(&config, a.seed, parallel)?;
    let mut out = Outcome::new("asymptotics", to_value(&config), Some(a.seed), vec![], a.out);
    if let Some(p) = a.csv {
        out.csv.push((p, profile_csv(&rep)));
    }
    out.reports.push(rep);
    Ok(out)
}

/// Flattens the experiment's table diagnostic (`profile`, `drift` or `table`) to CSV.
/// Nested objects become dotted columns; corner reports list their moment checks.
pub fn profile_csv(rep: &Report) -> String {
    let rows: Vec<Value> = ["profile", "drift", "table"]
        .iter()
        .find_map(|k| rep.diagnostics.get(*k).and_then(Value::as_array).cloned())
        .unwrap_or_else(|| {
            rep.checks
                .iter()
                .filter_map(|c| {
                    let m = c.name.strip_prefix("corner_moment_2m")?;
                    let d = c.detail.as_ref()?;
                    Some(json!({ "m": m, "estimate": d["estimate"]["mean"], "stderr": d["estimate"]["stderr"], "target": d["target"] }))
                })
                .collect()
        });
    let flat: Vec<Vec<(String, String)>> = rows.iter().map(|r| flatten("", r)).collect();
    let mut cols: Vec<String> = Vec::new();
    for r in &flat {
        for (k, _) in r {
            if !cols.contains(k) {
                cols.push(k.clone());
            }
        }
    }
    let mut s = cols.join(",");
    s.push('\n');
    for r in &flat {
        let line: Vec<&str> = cols.iter().map(|c| r.iter().find(|(k, _)| k == c).map_or("", |(_, v)| v.as_str())).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

fn flatten(prefix: &str, v: &Value) -> Vec<(String, String)> {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}_{k}") };
    match v {
        Value::Object(m) => m.iter().flat_map(|(k, x)| flatten(&key(k), x)).collect(),
        Value::Array(a) => a.iter().enumerate().flat_map(|(i, x)| flatten(&key(&i.to_string()), x)).collect(),
        Value::String(s) => vec![(prefix.to_string(), s.clone())],
        other => vec![(prefix.to_string(), other.to_string())],
    }
}

fn parse_c(s: &str) -> Result<C64> {
    s.trim().parse::<C64>().map_err(|_| Error::Config(format!("not a complex number: {s:?}")))
}

fn specfun_eval(function: SpecfunFn, args: &[String], tau: Option<&str>, eta: &str) -> Result<Outcome> {
    let z: Vec<C64> = args.iter().map(|s| parse_c(s)).collect::<Result<_>>()?;
    let need = |n: usize| if z.len() == n { Ok(()) } else { Err(Error::Config(format!("{function:?} takes {n} arguments, got {}", z.len()))) };
    let int = |c: C64| if c.im == 0.0 && c.re.fract() == 0.0 { Ok(c.re as i64) } else { Err(Error::Config(format!("index {c} is not an integer"))) };
    let ctx = match tau {
        None => EllipticContext::trigonometric(parse_c(eta)?),
        Some(t) => EllipticContext::elliptic(parse_c(t)?, parse_c(eta)?)?,
    };
    let value = match function {
        SpecfunFn::Theta1 => {
            need(1)?;
            specfun::theta1(z[0], &ctx)?
        }
        SpecfunFn::F => {
            need(1)?;
            specfun::f_eval(z[0], &ctx)
        }
        SpecfunFn::QPochhammer => {
            need(3)?;
            specfun::q_pochhammer(z[0], z[1], int(z[2])?)?
        }
        SpecfunFn::RationalPochhammer => {
            need(2)?;
            specfun::rational_pochhammer(z[0], int(z[1])?)?
        }
        SpecfunFn::EllipticPochhammer => {
            need(2)?;
            specfun::elliptic_pochhammer(z[0], int(z[1])?, &ctx)?
        }
    };
    let doc = json!({ "fn": function.to_possible_value().map(|v| v.get_name().to_string()), "args": args, "tau": tau, "eta": eta, "value": [value.re, value.im] });
    let mut out = Outcome::new("specfun eval", Value::Null, None, vec![], None);
    out.raw = Some(doc.to_string());
    Ok(out)
}
