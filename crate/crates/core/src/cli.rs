//! Command-line front end.
//!
//! Exit codes: `0` success, `1` runtime failure or failed check, `2` usage
//! or configuration error. Data goes to files and standard output; progress
//! and tables go to standard error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::config::{EstimatorKind, RunConfig};
use crate::dynamics::{
    run_trajectory, Algorithm, Dataset, GradientModel, NeighborPair, NoiseTimeScale, TrajectoryState,
};
use crate::error::Error;
use crate::experiments::{
    self, fmt_f64, gen_synthetic, perturb_row, run_discretization_study, run_stability_study,
    run_sweep, surrogate_loss,
};
use crate::quadratic_theory::{
    bound_generalization, bound_wasserstein_p, gamma_sweep, rank_two_decomposition, spectral_summary,
    BoundInputs,
};
use crate::rng::RngStream;
use crate::stable_noise::{noise_check, NoiseCheckConfig};
use crate::wasserstein::{sliced_w1_detail, wp_exact_small, EmpiricalMeasure};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Slack on `σ_min ≤ θ_min` before it is reported as a violation.
const ORDERING_SLACK: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "htlab", version, about = "Heavy-tailed SGD / SGDm stability laboratory")]
pub struct Cli {
    /// Increase log verbosity on standard error (repeatable)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the stable-noise sampler (characteristic function, isotropy, tail index)
    NoiseCheck(NoiseCheckArgs),
    /// Gram and momentum-system spectra of a dataset pair
    Spectra(SpectraArgs),
    /// Closed-form stability bounds for SGD and SGDm on a dataset pair
    Bounds(BoundsArgs),
    /// Run one optimizer trajectory
    Simulate(SimulateArgs),
    /// Generalization-gap sweep over a parameter grid
    Sweep(SweepArgs),
    /// Coupled-chain distance as a function of the sample size
    Stability(StabilityArgs),
    /// End-state distance as a function of the step size
    Discretization(DiscretizationArgs),
    /// Wasserstein distance between two sample files
    Wasserstein(WassersteinArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $HTLAB_OUTPUT_DIR, else ./htlab-out)
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Maximum number of worker threads
    #[arg(long = "parallel")]
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgorithmArg {
    Sgd,
    Sgdm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TimeScaleArg {
    Eta,
    Unit,
}

#[derive(Debug, Args)]
pub struct OptimizerArgs {
    /// Optimizer
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// Step size
    #[arg(long)]
    pub eta: Option<f64>,
    /// Friction (SGDm only)
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Gradient multiplier
    #[arg(long)]
    pub beta: Option<f64>,
    /// Number of iterations
    #[arg(long)]
    pub steps: Option<usize>,
    /// Noise tail index in (1, 2]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Noise scale; 0 disables the noise
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Divide the SGDm velocity noise by eta so the position increment matches SGD
    #[arg(long)]
    pub scale_match: Option<bool>,
    /// Time span of one noise increment
    #[arg(long, value_enum)]
    pub noise_time_scale: Option<TimeScaleArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Fixture {
    /// Rows sqrt(d) e_(i mod d), so the Gram matrix is the identity; the
    /// perturbed set negates row 0 (same Gram)
    Identity,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// CSV of the base dataset (header row, one sample per row)
    #[arg(long, conflicts_with = "fixture")]
    pub data: Option<PathBuf>,
    /// CSV of the perturbed dataset; default moves row 0 of the base by --delta
    #[arg(long, requires = "data")]
    pub perturbed: Option<PathBuf>,
    /// Built-in dataset pair
    #[arg(long, value_enum)]
    pub fixture: Option<Fixture>,
    /// Rows of a generated or fixture dataset
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Columns of a generated or fixture dataset
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    /// Entry standard deviation of a generated dataset
    #[arg(long = "sigma-a", default_value_t = 1.0)]
    pub sigma_a: f64,
    /// Length of the row-0 perturbation when no perturbed file is given
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct NoiseCheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Tail index in (1, 2]
    #[arg(long, default_value_t = 1.5)]
    pub alpha: f64,
    /// Scale parameter
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Number of draws (at least 10000)
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    /// Dimension of the isotropic draws
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    /// Fraction of order statistics used by the tail-index estimate
    #[arg(long, default_value_t = 0.002)]
    pub k_fraction: f64,
    /// Allowed tail-index error
    #[arg(long, default_value_t = 0.15)]
    pub hill_tolerance: f64,
}

#[derive(Debug, Args)]
pub struct SpectraArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub pair: PairArgs,
    /// Friction
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub pair: PairArgs,
    /// Friction
    #[arg(long, default_value_t = 1.0, conflicts_with = "gamma_sweep")]
    pub gamma: f64,
    /// Comma-separated increasing friction values
    #[arg(long, value_delimiter = ',')]
    pub gamma_sweep: Option<Vec<f64>>,
    /// Noise tail index in (1, 2)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Noise scale
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Lipschitz constant of the surrogate loss
    #[arg(long)]
    pub lipschitz: Option<f64>,
    /// Universal constant in the bounds
    #[arg(long)]
    pub c_universal: Option<f64>,
    /// Order of the Wasserstein bound, 1 <= p < alpha
    #[arg(long)]
    pub p: Option<f64>,
    /// Norm of the initial state
    #[arg(long)]
    pub y0_norm: Option<f64>,
    /// Use this |sigma1 + sigma2| instead of the one computed from the pair
    #[arg(long)]
    pub abs_sigma_sum: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// CSV training set; generated when absent
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rows of a generated training set
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Columns of a generated training set
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    /// Entry standard deviation of a generated training set
    #[arg(long = "sigma-a", default_value_t = 1.0)]
    pub sigma_a: f64,
    /// Record every k-th step (the final step is always recorded)
    #[arg(long, default_value_t = 100)]
    pub record_every: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Tail indices, comma separated
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Data scales, comma separated
    #[arg(long = "sigma-a", value_delimiter = ',')]
    pub sigma_a: Option<Vec<f64>>,
    /// Dimensions, comma separated
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Friction values, comma separated; 0 means SGD
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// Step sizes, comma separated
    #[arg(long, value_delimiter = ',')]
    pub etas: Option<Vec<f64>>,
    /// Training-set size
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Test-set size
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Iterations per run
    #[arg(long)]
    pub steps: Option<usize>,
    /// Seeds per cell
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Noise scale
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Gradient multiplier
    #[arg(long)]
    pub beta: Option<f64>,
    /// Divide the SGDm velocity noise by eta
    #[arg(long)]
    pub scale_match: Option<bool>,
    /// Time span of one noise increment
    #[arg(long, value_enum)]
    pub noise_time_scale: Option<TimeScaleArg>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Sample sizes, comma separated, increasing, each >= 50
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Independent noise realisations per sample size
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Dimension
    #[arg(long)]
    pub d: Option<usize>,
    /// Entry standard deviation
    #[arg(long = "sigma-a")]
    pub sigma_a: Option<f64>,
    /// Length of the row-0 perturbation
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DiscretizationArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Decreasing step sizes, comma separated; the last is the reference
    #[arg(long, value_delimiter = ',')]
    pub etas: Option<Vec<f64>>,
    /// End states per step size
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Physical time horizon steps * eta
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Rows of the training set
    #[arg(long)]
    pub n: Option<usize>,
    /// Dimension
    #[arg(long)]
    pub d: Option<usize>,
    /// Entry standard deviation
    #[arg(long = "sigma-a")]
    pub sigma_a: Option<f64>,
    /// Distance estimator
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorKind>,
    /// Directions of the sliced estimator
    #[arg(long)]
    pub projections: Option<usize>,
    /// Bootstrap resamples for the standard error
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WassersteinArgs {
    /// First sample file (CSV with header, one sample per row)
    pub a: PathBuf,
    /// Second sample file
    pub b: PathBuf,
    /// Order p >= 1 (exact estimator)
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Exact assignment solver (default)
    #[arg(long, conflicts_with = "sliced")]
    pub exact: bool,
    /// Sliced W1 surrogate
    #[arg(long)]
    pub sliced: bool,
    /// Directions of the sliced estimator
    #[arg(long, default_value_t = 200)]
    pub projections: usize,
    /// Seed of the sliced estimator
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) | CliError::CheckFailed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::AlphaOutOfRange { .. }
            | Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. }
            | Error::TooFewSamples { .. }
            | Error::TooLarge { .. }
            | Error::Empty(_)
            | Error::Config(_)
            | Error::Io(_) => CliError::Usage(e.to_string()),
            Error::NonFinite(_) | Error::SingularGram { .. } | Error::Diverged { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::NoiseCheck(a) => cmd_noise_check(a),
        Command::Spectra(a) => cmd_spectra(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Discretization(a) => cmd_discretization(a),
        Command::Wasserstein(a) => cmd_wasserstein(a),
    }
}

fn load_config(common: &CommonArgs) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.master_seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        cfg.run.out_dir = Some(dir.clone());
    }
    if let Some(p) = common.parallel {
        if p == 0 {
            return Err(CliError::Usage("--parallel must be >= 1".into()));
        }
        cfg.run.parallelism = p;
    }
    Ok(cfg)
}

fn apply_optimizer_args(cfg: &mut RunConfig, o: &OptimizerArgs) {
    let s = &mut cfg.optimizer;
    if let Some(a) = o.algorithm {
        s.algorithm = match a {
            AlgorithmArg::Sgd => Algorithm::Sgd,
            AlgorithmArg::Sgdm => Algorithm::Sgdm,
        };
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = o.$field { s.$field = v; } )* };
    }
    set!(eta, gamma, beta, steps, alpha, zeta, scale_match);
    if let Some(t) = o.noise_time_scale {
        s.noise_time_scale = time_scale(t);
    }
}

fn time_scale(t: TimeScaleArg) -> NoiseTimeScale {
    match t {
        TimeScaleArg::Eta => NoiseTimeScale::Eta,
        TimeScaleArg::Unit => NoiseTimeScale::Unit,
    }
}

fn thread_pool(n: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn meta(command: &str) -> Value {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    json!({ "command": command, "generated_unix_secs": secs })
}

fn summary(command: &str, config: Value, result: Value) -> Value {
    json!({
        "tool": "htlab",
        "version": VERSION,
        "config": config,
        "result": result,
        "meta": meta(command),
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

/// Files written together: each goes to a temporary name first and all are
/// renamed at the end. On failure nothing is left behind.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    fn commit(self) -> CliResult<Vec<PathBuf>> {
        let io = |e: std::io::Error, p: &Path| CliError::Runtime(format!("{}: {e}", p.display()));
        std::fs::create_dir_all(&self.dir).map_err(|e| io(e, &self.dir))?;
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let cleanup = |staged: &[(PathBuf, PathBuf)]| {
            for (tmp, _) in staged {
                let _ = std::fs::remove_file(tmp);
            }
        };
        for (name, contents) in &self.files {
            let tmp = self.dir.join(format!(".{name}.partial"));
            let dest = self.dir.join(name);
            if let Err(e) = std::fs::write(&tmp, contents) {
                cleanup(&staged);
                let _ = std::fs::remove_file(&tmp);
                return Err(io(e, &tmp));
            }
            staged.push((tmp, dest));
        }
        let mut done = Vec::new();
        for (tmp, dest) in &staged {
            if let Err(e) = std::fs::rename(tmp, dest) {
                cleanup(&staged);
                for d in &done {
                    let _ = std::fs::remove_file(d);
                }
                return Err(io(e, dest));
            }
            done.push(dest.clone());
        }
        for p in &done {
            log::info!("wrote {}", p.display());
        }
        Ok(done)
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Numeric CSV with a mandatory header row.
pub fn read_matrix_csv(path: &Path) -> crate::error::Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::invalid("csv", format!("{}: row {}: not a number: {f:?}", path.display(), i + 2))
                })
            })
            .collect::<crate::error::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty("csv data rows"));
    }
    Ok(rows)
}

fn identity_fixture(n: usize, d: usize) -> CliResult<NeighborPair> {
    if d == 0 || n == 0 || !n.is_multiple_of(d) {
        return Err(CliError::Usage(format!(
            "identity fixture needs n to be a positive multiple of d (n = {n}, d = {d})"
        )));
    }
    let s = (d as f64).sqrt();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = vec![0.0; d];
            r[i % d] = s;
            r
        })
        .collect();
    let base = Dataset::from_rows(&rows)?;
    let mut flipped = rows[0].clone();
    flipped.iter_mut().for_each(|x| *x = -*x);
    Ok(NeighborPair::new(base, 0, &flipped)?)
}

fn build_pair(args: &PairArgs, seed: u64) -> CliResult<NeighborPair> {
    let root = RngStream::new(seed, 0);
    if let Some(Fixture::Identity) = args.fixture {
        return identity_fixture(args.n, args.d);
    }
    let base = match &args.data {
        Some(path) => Dataset::from_rows(&read_matrix_csv(path)?)?,
        None => gen_synthetic(args.n, args.d, args.sigma_a, root.derive(1))?,
    };
    match &args.perturbed {
        Some(path) => {
            let other = Dataset::from_rows(&read_matrix_csv(path)?)?;
            Ok(NeighborPair::from_datasets(base, other)?)
        }
        None => Ok(perturb_row(base, 0, args.delta, root.derive(2))?),
    }
}

fn cmd_noise_check(a: NoiseCheckArgs) -> CliResult<()> {
    let cfg = load_config(&a.common)?;
    let check = NoiseCheckConfig {
        alpha: a.alpha,
        scale: a.scale,
        samples: a.samples,
        dim: a.dim,
        k_fraction: a.k_fraction,
        hill_tolerance: a.hill_tolerance,
        ..NoiseCheckConfig::new(a.alpha, a.samples)
    };
    let lines = noise_check(&check, RngStream::new(cfg.run.master_seed, 0))?;
    let mut table = String::new();
    for l in &lines {
        let _ = writeln!(
            table,
            "{:<28} observed {:>12.6} expected {:>12.6} dev {:>10.3e} tol {:>9.3e}  {}",
            l.name,
            l.observed,
            l.expected,
            l.deviation,
            l.tolerance,
            if l.pass { "PASS" } else { "FAIL" }
        );
    }
    eprint!("{table}");
    let all_pass = lines.iter().all(|l| l.pass);
    let mut config = to_json(&check);
    config["master_seed"] = json!(cfg.run.master_seed);
    let out = summary("noise-check", config, json!({ "checks": lines, "pass": all_pass }));
    print!("{}", pretty(&out));
    if all_pass {
        Ok(())
    } else {
        let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.name.as_str()).collect();
        Err(CliError::CheckFailed(failed.join(", ")))
    }
}

fn pair_config(args: &PairArgs, seed: u64) -> Value {
    json!({
        "data": args.data,
        "perturbed": args.perturbed,
        "fixture": args.fixture.map(|_| "identity"),
        "n": args.n,
        "d": args.d,
        "sigmaA": args.sigma_a,
        "delta": args.delta,
        "master_seed": seed,
    })
}

fn cmd_spectra(a: SpectraArgs) -> CliResult<()> {
    let cfg = load_config(&a.common)?;
    let pair = build_pair(&a.pair, cfg.run.master_seed)?;
    let s = spectral_summary(&pair, a.gamma)?;
    let mut csv = String::from("dataset,index,kappa,mu_minus,mu_plus\n");
    for (label, spec) in [("base", &s.base), ("perturbed", &s.perturbed)] {
        for i in 0..spec.kappa.len() {
            let _ = writeln!(
                csv,
                "{label},{i},{},{},{}",
                fmt_f64(spec.kappa[i]),
                fmt_f64(spec.mu_minus[i]),
                fmt_f64(spec.mu_plus[i])
            );
        }
    }
    let mut config = pair_config(&a.pair, cfg.run.master_seed);
    config["gamma"] = json!(a.gamma);
    let result = json!({
        "gamma": s.gamma,
        "theta_min": s.theta_min,
        "sigma_min": s.sigma_min,
        "rho": pair.rho,
    });
    let out = summary("spectra", config, result);
    let mut files = Outputs::new(cfg.output_dir());
    files.add("spectra.csv", csv);
    files.add("spectra.json", pretty(&out));
    check_ordering(s.sigma_min, s.theta_min)?;
    files.commit()?;
    print!("{}", pretty(&out));
    Ok(())
}

fn check_ordering(sigma_min: f64, theta_min: f64) -> CliResult<()> {
    if sigma_min <= theta_min + ORDERING_SLACK {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "sigma_min = {sigma_min} exceeds theta_min = {theta_min}"
        )))
    }
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| a / b)
}

fn cmd_bounds(a: BoundsArgs) -> CliResult<()> {
    let cfg = load_config(&a.common)?;
    let pair = build_pair(&a.pair, cfg.run.master_seed)?;
    let rank_two = rank_two_decomposition(&pair.x(), &pair.x_hat())?;
    let inputs = BoundInputs {
        lipschitz: a.lipschitz.unwrap_or(cfg.bounds.lipschitz),
        zeta: a.zeta.unwrap_or(cfg.optimizer.zeta),
        abs_sigma_sum: a.abs_sigma_sum.unwrap_or(rank_two.abs_sigma_sum()),
        y0_norm: a.y0_norm.unwrap_or(cfg.bounds.y0_norm),
        n: pair.base.n(),
        d: pair.base.d(),
        alpha: a.alpha.unwrap_or(cfg.optimizer.alpha),
        p: a.p.unwrap_or(cfg.bounds.p),
        c_universal: a.c_universal.unwrap_or(cfg.bounds.c_universal),
    };
    inputs.validate()?;
    let gammas = a.gamma_sweep.clone().unwrap_or_else(|| vec![a.gamma]);
    let rows = gamma_sweep(&pair, &gammas, &inputs)?;
    let mut csv = String::from("gamma,sigma_min,theta_min,bound_sgdm,bound_sgd,ratio,wp_bound_sgdm,wp_bound_sgd\n");
    let mut json_rows = Vec::new();
    for r in &rows {
        let wp_sgdm = bound_wasserstein_p(&inputs, r.sigma_min)?;
        let wp_sgd = bound_wasserstein_p(&inputs, r.theta_min)?;
        let rt = ratio(r.bound_sgdm, r.bound_sgd);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(r.gamma),
            fmt_f64(r.sigma_min),
            fmt_f64(r.theta_min),
            fmt_f64(r.bound_sgdm),
            fmt_f64(r.bound_sgd),
            rt.map_or_else(|| "NaN".to_string(), fmt_f64),
            fmt_f64(wp_sgdm),
            fmt_f64(wp_sgd)
        );
        json_rows.push(json!({
            "gamma": r.gamma,
            "sigma_min": r.sigma_min,
            "theta_min": r.theta_min,
            "bound_sgdm": r.bound_sgdm,
            "bound_sgd": r.bound_sgd,
            "ratio": rt,
            "wp_bound_sgdm": wp_sgdm,
            "wp_bound_sgd": wp_sgd,
        }));
    }
    let mut config = pair_config(&a.pair, cfg.run.master_seed);
    config["gammas"] = json!(gammas);
    config["bound_inputs"] = to_json(&inputs);
    let first = &rows[0];
    let result = json!({
        "theta_min": first.theta_min,
        "sigma_min": first.sigma_min,
        "abs_sigma_sum": inputs.abs_sigma_sum,
        "sigma1": rank_two.sigma1,
        "sigma2": rank_two.sigma2,
        "degenerate_perturbation": rank_two.degenerate,
        "rho": pair.rho,
        "bound_sgd": bound_generalization(&inputs, first.theta_min)?,
        "bound_sgdm": first.bound_sgdm,
        "ratio": ratio(first.bound_sgdm, first.bound_sgd),
        "rows": json_rows,
    });
    let out = summary("bounds", config, result);
    for r in &rows {
        check_ordering(r.sigma_min, r.theta_min)?;
    }
    let mut files = Outputs::new(cfg.output_dir());
    files.add("bounds.csv", csv);
    files.add("bounds.json", pretty(&out));
    files.commit()?;
    print!("{}", pretty(&out));
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    apply_optimizer_args(&mut cfg, &a.optimizer);
    let opt = cfg.optimizer.to_config()?;
    let root = RngStream::new(cfg.run.master_seed, 0);
    let data = match &a.data {
        Some(path) => Dataset::from_rows(&read_matrix_csv(path)?)?,
        None => gen_synthetic(a.n, a.d, a.sigma_a, root.derive(1))?,
    };
    let init = TrajectoryState::zeros(data.d());
    let states = run_trajectory(&init, &opt, &GradientModel::Quadratic, &data, root.derive(2), a.record_every)?;
    let mut csv = String::from("step,train_loss,theta_norm,v_norm\n");
    let mut step_of = (1..=opt.steps).filter(|k| a.record_every > 0 && k % a.record_every == 0);
    for (i, s) in states.iter().enumerate() {
        let k = if i + 1 == states.len() {
            opt.steps
        } else {
            step_of.next().unwrap_or(opt.steps)
        };
        let _ = writeln!(
            csv,
            "{k},{},{},{}",
            fmt_f64(surrogate_loss(&s.theta, &data)?),
            fmt_f64(norm(&s.theta)),
            fmt_f64(norm(&s.v))
        );
    }
    let last = states.last().expect("final state recorded");
    let config = json!({
        "optimizer": cfg.optimizer,
        "data": a.data,
        "n": data.n(),
        "d": data.d(),
        "sigmaA": a.sigma_a,
        "record_every": a.record_every,
        "master_seed": cfg.run.master_seed,
    });
    let result = json!({
        "final_train_loss": surrogate_loss(&last.theta, &data)?,
        "final_theta_norm": norm(&last.theta),
        "final_v_norm": norm(&last.v),
        "recorded": states.len(),
    });
    let out = summary("simulate", config, result);
    let mut files = Outputs::new(cfg.output_dir());
    files.add("trajectory.csv", csv);
    files.add("simulate.json", pretty(&out));
    files.commit()?;
    print!("{}", pretty(&out));
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    let g = &mut cfg.grid;
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field.clone() { g.$field = v; } )* };
    }
    set!(alphas, sigma_a, dims, gammas, etas, n_train, n_test, steps, seeds, zeta, beta, scale_match);
    if let Some(t) = a.noise_time_scale {
        g.noise_time_scale = time_scale(t);
    }
    cfg.grid.validate()?;
    eprintln!(
        "sweep: {} cells x {} seeds, {} threads",
        cfg.grid.cells().len(),
        cfg.grid.seeds,
        cfg.run.parallelism
    );
    let records = run_sweep(&cfg.grid, cfg.run.master_seed, cfg.run.parallelism)?;
    let csv = experiments::gap_csv_string(&records);
    let config = json!({
        "grid": cfg.grid,
        "master_seed": cfg.run.master_seed,
        "parallelism": cfg.run.parallelism,
    });
    let result = json!({
        "runs": records.len(),
        "diverged": records.iter().filter(|r| r.diverged).count(),
        "cells": experiments::summarize(&records),
        "ordering": experiments::gap_ordering(&records),
    });
    let out = summary("sweep", config, result);
    let mut files = Outputs::new(cfg.output_dir());
    files.add("sweep.csv", csv);
    files.add("sweep.json", pretty(&out));
    files.commit()?;
    Ok(())
}

fn cmd_stability(a: StabilityArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    apply_optimizer_args(&mut cfg, &a.optimizer);
    let s = &mut cfg.stability;
    if let Some(n) = a.n.clone() {
        s.n = n;
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { s.$field = v; } )* };
    }
    set!(replicates, d, sigma_a, delta);
    let opt = cfg.optimizer.to_config()?;
    let pool = thread_pool(cfg.run.parallelism)?;
    let table = pool.install(|| {
        run_stability_study(
            &cfg.stability.n,
            &opt,
            cfg.stability.replicates,
            cfg.run.master_seed,
            &cfg.stability.options(),
        )
    })?;
    let mut csv = String::from("n,rho,abs_sigma_sum,mean_distance,std_err,replicates,diverged\n");
    for r in &table.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.n,
            fmt_f64(r.rho),
            fmt_f64(r.abs_sigma_sum),
            fmt_f64(r.mean_distance),
            fmt_f64(r.std_err),
            r.replicates,
            r.diverged
        );
    }
    let config = json!({
        "optimizer": cfg.optimizer,
        "stability": cfg.stability,
        "master_seed": cfg.run.master_seed,
        "parallelism": cfg.run.parallelism,
    });
    let out = summary("stability", config, to_json(&table));
    let mut files = Outputs::new(cfg.output_dir());
    files.add("stability.csv", csv);
    files.add("stability.json", pretty(&out));
    files.commit()?;
    print!("{}", pretty(&out));
    Ok(())
}

fn cmd_discretization(a: DiscretizationArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    apply_optimizer_args(&mut cfg, &a.optimizer);
    let s = &mut cfg.discretization;
    if let Some(e) = a.etas.clone() {
        s.etas = e;
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { s.$field = v; } )* };
    }
    set!(replicates, horizon, n, d, sigma_a, estimator, projections, bootstrap);
    let opt = cfg.optimizer.to_config()?;
    let pool = thread_pool(cfg.run.parallelism)?;
    let table = pool.install(|| {
        run_discretization_study(
            &cfg.discretization.etas,
            &opt,
            cfg.discretization.replicates,
            cfg.run.master_seed,
            &cfg.discretization.options(),
        )
    })?;
    let mut csv = String::from("eta,steps,distance,std_err,row\n");
    for (r, kind) in table
        .rows
        .iter()
        .map(|r| (r, "comparison"))
        .chain(std::iter::once((&table.noise_floor, "noise-floor")))
    {
        let _ = writeln!(
            csv,
            "{},{},{},{},{kind}",
            fmt_f64(r.eta),
            r.steps,
            fmt_f64(r.distance),
            fmt_f64(r.std_err)
        );
    }
    let config = json!({
        "optimizer": cfg.optimizer,
        "discretization": cfg.discretization,
        "master_seed": cfg.run.master_seed,
        "parallelism": cfg.run.parallelism,
    });
    let mut result = to_json(&table);
    result["non_increasing_within_2se"] = json!(table.non_increasing_within(2.0));
    let out = summary("discretization", config, result);
    let mut files = Outputs::new(cfg.output_dir());
    files.add("discretization.csv", csv);
    files.add("discretization.json", pretty(&out));
    files.commit()?;
    print!("{}", pretty(&out));
    Ok(())
}

fn cmd_wasserstein(a: WassersteinArgs) -> CliResult<()> {
    let ma = EmpiricalMeasure::from_points(&read_matrix_csv(&a.a)?)?;
    let mb = EmpiricalMeasure::from_points(&read_matrix_csv(&a.b)?)?;
    let result = if a.sliced {
        if a.p != 1.0 {
            return Err(CliError::Usage("the sliced estimator supports p = 1 only".into()));
        }
        let est = sliced_w1_detail(&ma, &mb, a.projections, RngStream::new(a.seed, 0))?;
        json!({
            "estimator": "sliced-W1",
            "p": 1.0,
            "value": est.mean,
            "std_err": est.std_err,
            "projections": est.projections,
        })
    } else {
        json!({
            "estimator": "exact",
            "p": a.p,
            "value": wp_exact_small(&ma, &mb, a.p)?,
        })
    };
    let config = json!({
        "a": a.a,
        "b": a.b,
        "p": a.p,
        "sliced": a.sliced,
        "projections": a.projections,
        "seed": a.seed,
    });
    print!("{}", pretty(&summary("wasserstein", config, result)));
    Ok(())
}
