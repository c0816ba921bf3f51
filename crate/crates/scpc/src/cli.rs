//! The `scpc` command line tool.
//!
//! Every run prints (or writes to `--out`) a JSON document
//! `{"schema": "scpc/1", "command": ..., "config": ..., "result": ...}`.
//! `config` holds every setting with defaults filled in, and
//! `scpc rerun --from FILE` repeats a run from such a document.
//!
//! Exit codes: 0 on success, 2 for invalid input (including bad flags), 3
//! for numerical or solver failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use scpc_core::covariance::{avg_correlation_at, covariance_matrix};
use scpc_core::eigen::pc_weights;
use scpc_core::ftest::{hotelling_test, FtestGrid, FtestOptions, FTEST_MIN_REPS};
use scpc_core::robustness::{matern_robust_range, RobustnessOptions};
use scpc_core::eigen::NYSTROM_DEFAULT_SUBSETS;
use scpc_core::scpc::NystromMode;
use scpc_core::{
    calibrate_c0, regression_scores, CovarianceKernel, KernelFamily, PCBasis, RegressionInput, Result, ScpcError,
    ScpcOptions, ScpcProcedure, SpatialDesign,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::io::{write_csv_rows, write_json, Table};
use crate::montecarlo::{run_experiment, SimulationConfig, DEFAULT_SEED};
use crate::parallel::{nystrom_pc_weights_par, select_q_volume_par};

pub const SCHEMA: &str = "scpc/1";

#[derive(Debug, Parser)]
#[command(name = "scpc", version, about = "Spatial correlation robust inference with principal component weights")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Confidence interval for a mean or a regression coefficient.
    Estimate(EstimateArgs),
    /// Persistence parameter matching an average pairwise correlation.
    Calibrate(CalibrateArgs),
    /// Range of Matérn average correlations over which the test keeps its size.
    Certify(CertifyArgs),
    /// Joint test of several means.
    Ftest(FtestArgs),
    /// Monte Carlo experiment from a JSON configuration.
    Simulate(SimulateArgs),
    /// Repeats a run from the JSON document it produced.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NystromArg {
    Auto,
    On,
    Off,
}

impl From<NystromArg> for NystromMode {
    fn from(a: NystromArg) -> Self {
        match a {
            NystromArg::Auto => NystromMode::Auto,
            NystromArg::On => NystromMode::On,
            NystromArg::Off => NystromMode::Off,
        }
    }
}

/// Settings shared by the commands that build the SCPC procedure.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProcedureArgs {
    /// Average pairwise correlation of the worst-case benchmark.
    #[arg(long, default_value_t = 0.02)]
    pub rho0: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Benchmark kernel: exponential, matern32, matern52 or gaussian.
    #[arg(long, default_value = "exponential")]
    pub family: KernelFamily,
    /// Largest number of principal components (default min(n-1, 40)).
    #[arg(long)]
    pub q_max: Option<usize>,
    #[arg(long, value_enum, default_value = "auto")]
    pub nystrom: NystromArg,
    /// Nyström subset size (default min(1000, n)).
    #[arg(long = "nystrom-subset-size", alias = "subset-size")]
    pub subset_size: Option<usize>,
    #[arg(long = "nystrom-subsets", alias = "subsets", default_value_t = NYSTROM_DEFAULT_SUBSETS)]
    pub subsets: usize,
    /// Integer seed, or `random` for a fresh one (echoed in the output).
    #[arg(long, default_value_t = DEFAULT_SEED.to_string())]
    pub seed: String,
}

impl ProcedureArgs {
    fn resolve(&mut self, n: usize) -> Result<ScpcOptions> {
        let seed = resolve_seed(&mut self.seed)?;
        let mut opts = ScpcOptions {
            family: self.family,
            alpha: self.alpha,
            q_max: self.q_max,
            nystrom: self.nystrom.into(),
            nystrom_subset_size: self.subset_size,
            nystrom_subsets: self.subsets,
            seed,
            ..ScpcOptions::default()
        };
        if n < 2 {
            return Err(ScpcError::Input(format!("need at least two locations, got {n}")));
        }
        self.q_max = Some(opts.resolved_q_max(n));
        if opts.uses_nystrom(n) {
            self.subset_size = Some(opts.resolved_subset_size(n));
        }
        opts.q_max = self.q_max;
        opts.nystrom_subset_size = self.subset_size;
        Ok(opts)
    }
}

fn resolve_seed(seed: &mut String) -> Result<u64> {
    let value = if seed.trim() == "random" {
        rand::random::<u64>()
    } else {
        seed.trim().parse().map_err(|_| ScpcError::Input(format!("--seed must be an integer or 'random', got '{seed}'")))?
    };
    *seed = value.to_string();
    Ok(value)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome column.
    #[arg(long)]
    pub y_col: String,
    /// Location columns, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub coord_cols: Vec<String>,
    /// Regressor of interest; with it the interval is for its coefficient.
    #[arg(long)]
    pub x_col: Option<String>,
    /// Control columns for the regression, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub controls: Vec<String>,
    /// Leave the intercept out of the regression controls.
    #[arg(long)]
    #[serde(default)]
    pub no_intercept: bool,
    /// Hypothesized value for the reported t-statistic.
    #[arg(long, default_value_t = 0.0)]
    pub mu0: f64,
    #[command(flatten)]
    pub procedure: ProcedureArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub coord_cols: Vec<String>,
    #[arg(long, default_value_t = 0.02)]
    pub rho0: f64,
    #[arg(long, default_value = "exponential")]
    pub family: KernelFamily,
    /// Points of the reported average-correlation curve, log-spaced over
    /// `[c0/100, 100 c0]`.
    #[arg(long, default_value_t = 25)]
    pub curve_points: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CertifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub coord_cols: Vec<String>,
    #[command(flatten)]
    pub procedure: ProcedureArgs,
    /// Alternative families, comma separated (default: all four).
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub families: Vec<KernelFamily>,
    #[arg(long, default_value_t = 60)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub rho_lo: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rho_hi: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FtestArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome columns, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub y_cols: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub coord_cols: Vec<String>,
    /// Hypothesized means, comma separated (default all zero).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default)]
    pub mu0: Vec<f64>,
    #[arg(long, default_value_t = 0.02)]
    pub rho0: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "exponential")]
    pub family: KernelFamily,
    /// Largest number of components (default min(n-1, 20)).
    #[arg(long)]
    pub q_max: Option<usize>,
    #[arg(long, default_value_t = FTEST_MIN_REPS)]
    pub reps: usize,
    /// Log-spaced persistence values per outcome coordinate.
    #[arg(long, default_value_t = 8)]
    pub grid_points: usize,
    #[arg(long, default_value_t = DEFAULT_SEED.to_string())]
    pub seed: String,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Default `q_max` of the joint test, lower than for the t-test since each
/// `q` needs its own simulation.
pub const FTEST_DEFAULT_Q_MAX: usize = 20;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// CSV with one row per scenario.
    #[arg(long)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    /// JSON document written by an earlier run.
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn envelope(command: &str, config: Value, result: Value) -> Value {
    json!({ "schema": SCHEMA, "command": command, "config": config, "result": result })
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| ScpcError::Numeric(format!("JSON encoding: {e}")))
}

fn load(data: &Path, coord_cols: &[String]) -> Result<(Table, SpatialDesign)> {
    let table = Table::from_path(data)?;
    let design = table.design(coord_cols).map_err(|e| e.at("locations"))?;
    Ok((table, design))
}

fn basis_for(design: &SpatialDesign, c0: f64, opts: &ScpcOptions) -> Result<PCBasis> {
    let n = design.n();
    let q_max = opts.resolved_q_max(n);
    let kernel = CovarianceKernel::new(opts.family, c0)?;
    if opts.uses_nystrom(n) {
        nystrom_pc_weights_par(design, &kernel, q_max, opts.resolved_subset_size(n), opts.nystrom_subsets, opts.seed)
    } else {
        pc_weights(&covariance_matrix(&kernel, design), q_max)
    }
}

fn procedure(design: &SpatialDesign, rho0: f64, opts: &ScpcOptions) -> Result<ScpcProcedure> {
    let c0 = calibrate_c0(design, opts.family, rho0).map_err(|e| e.at("calibration"))?;
    let basis = basis_for(design, c0, opts).map_err(|e| e.at("principal components"))?;
    ScpcProcedure::with_basis(design, rho0, c0, basis, opts)
}

pub fn estimate(mut args: EstimateArgs) -> Result<Value> {
    let (table, design) = load(&args.data, &args.coord_cols)?;
    let opts = args.procedure.resolve(design.n())?;
    let y = table.vector(&args.y_col)?;
    let (target, regression) = match &args.x_col {
        None => (y, None),
        Some(x) => {
            let x = table.vector(x)?;
            let mut cols: Vec<DVector<f64>> = Vec::new();
            if !args.no_intercept {
                cols.push(DVector::from_element(design.n(), 1.0));
            }
            for c in &args.controls {
                cols.push(table.vector(c)?);
            }
            let z = if cols.is_empty() { DMatrix::zeros(design.n(), 0) } else { DMatrix::from_columns(&cols) };
            let s = regression_scores(&RegressionInput { w: y, x, z }).map_err(|e| e.at("regression"))?;
            let beta = s.beta_hat;
            (s.scores, Some(beta))
        }
    };
    let p = procedure(&design, args.procedure.rho0, &opts)?;
    let r = p.interval(&target, args.mu0)?;
    let mut result = to_value(&r)?;
    if let Some(b) = regression {
        result["beta_hat"] = json!(b);
    }
    Ok(envelope("estimate", to_value(&args)?, result))
}

pub fn calibrate(args: CalibrateArgs) -> Result<Value> {
    let (_, design) = load(&args.data, &args.coord_cols)?;
    let c0 = calibrate_c0(&design, args.family, args.rho0)?;
    let k = args.curve_points.max(2);
    let curve: Vec<Value> = (0..k)
        .map(|i| {
            let c = c0 * 10f64.powf(-2.0 + 4.0 * i as f64 / (k - 1) as f64);
            json!({ "c": c, "rho": avg_correlation_at(&design, args.family, c) })
        })
        .collect();
    let result = json!({ "c0": c0, "n": design.n(), "rho_curve": curve });
    Ok(envelope("calibrate", to_value(&args)?, result))
}

pub fn certify(mut args: CertifyArgs) -> Result<Value> {
    let (_, design) = load(&args.data, &args.coord_cols)?;
    let mut opts = args.procedure.resolve(design.n())?;
    if args.procedure.family != KernelFamily::Exponential {
        return Err(ScpcError::Input("the robustness check uses the exponential benchmark; drop --family".into()));
    }
    opts.family = KernelFamily::Exponential;
    let p = procedure(&design, args.procedure.rho0, &opts)?;
    if args.families.is_empty() {
        args.families = KernelFamily::ALL.to_vec();
    }
    let ropts =
        RobustnessOptions { families: args.families.clone(), grid_points: args.grid_points, rho_range: (args.rho_lo, args.rho_hi) };
    let report = matern_robust_range(&design, p.c0, &p.basis.w0(), p.cv(), &ropts).map_err(|e| e.at("certificate"))?;
    let result = json!({
        "c0": p.c0,
        "q": p.q(),
        "cv": p.cv(),
        "report": to_value(&report)?,
    });
    Ok(envelope("certify", to_value(&args)?, result))
}

pub fn ftest(mut args: FtestArgs) -> Result<Value> {
    let (table, design) = load(&args.data, &args.coord_cols)?;
    let n = design.n();
    let m = args.y_cols.len();
    let seed = resolve_seed(&mut args.seed)?;
    if args.mu0.is_empty() {
        args.mu0 = vec![0.0; m];
    }
    if args.mu0.len() != m {
        return Err(ScpcError::Input(format!("--mu0 has {} values for {m} outcome columns", args.mu0.len())));
    }
    if n < 2 {
        return Err(ScpcError::Input(format!("need at least two locations, got {n}")));
    }
    let q_max = args.q_max.unwrap_or(FTEST_DEFAULT_Q_MAX).min(n - 1);
    args.q_max = Some(q_max);
    if q_max < m {
        return Err(ScpcError::Input(format!("q_max = {q_max} is below the number of outcomes {m}")));
    }
    let y = table.matrix(&args.y_cols)?;
    let c0 = calibrate_c0(&design, args.family, args.rho0).map_err(|e| e.at("calibration"))?;
    let opts = ScpcOptions { family: args.family, q_max: Some(q_max), seed, ..ScpcOptions::default() };
    let basis = basis_for(&design, c0, &opts).map_err(|e| e.at("principal components"))?;
    let fopts = FtestOptions { reps: args.reps, grid: FtestGrid::LogSpaced { points: args.grid_points }, seed, ..FtestOptions::default() };
    let sel = select_q_volume_par(&design, &basis, args.family, c0, args.alpha, m, q_max, &fopts)
        .map_err(|e| e.at("critical value"))?;
    let res = hotelling_test(&y, &args.mu0, &basis, &sel, c0, args.alpha).map_err(|e| e.at("statistic"))?;
    let mut result = to_value(&res)?;
    result["cv_method"] = json!(if m == 1 { "quadrature" } else { "monte_carlo" });
    if m > 1 {
        result["mc_se"] = json!((args.alpha * (1.0 - args.alpha) / args.reps as f64).sqrt());
    }
    Ok(envelope("ftest", to_value(&args)?, result))
}

#[derive(Debug, Serialize)]
struct ScenarioRow<'a> {
    method: &'a str,
    scenario: &'a str,
    n: usize,
    valid: usize,
    rejection_rate: f64,
    mc_se: f64,
    mean_length: f64,
    length_se: f64,
    errors: usize,
}

pub fn simulate(args: SimulateArgs) -> Result<Value> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| ScpcError::Input(format!("cannot read {}: {e}", args.config.display())))?;
    let config: SimulationConfig =
        serde_json::from_str(&text).map_err(|e| ScpcError::Input(format!("invalid simulation config: {e}")))?;
    simulate_config(&config, args.csv.as_deref())
}

fn simulate_config(config: &SimulationConfig, csv: Option<&Path>) -> Result<Value> {
    let report = run_experiment(config)?;
    if let Some(path) = csv {
        let rows: Vec<ScenarioRow> = report
            .scenarios
            .iter()
            .map(|s| ScenarioRow {
                method: &report.method,
                scenario: &s.label,
                n: report.n,
                valid: s.valid,
                rejection_rate: s.rejection_rate,
                mc_se: s.mc_se,
                mean_length: s.mean_length,
                length_se: s.length_se,
                errors: s.errors,
            })
            .collect();
        write_csv_rows(&rows, path)?;
    }
    Ok(envelope("simulate", to_value(config)?, to_value(&report)?))
}

fn rerun(args: RerunArgs) -> Result<(Value, Option<PathBuf>)> {
    let text = std::fs::read_to_string(&args.from)
        .map_err(|e| ScpcError::Input(format!("cannot read {}: {e}", args.from.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| ScpcError::Input(format!("invalid JSON: {e}")))?;
    if doc["schema"] != SCHEMA {
        return Err(ScpcError::Input(format!("unsupported schema {}", doc["schema"])));
    }
    let config = doc["config"].clone();
    let bad = |e: serde_json::Error| ScpcError::Input(format!("invalid echoed configuration: {e}"));
    let value = match doc["command"].as_str() {
        Some("estimate") => estimate(serde_json::from_value(config).map_err(bad)?)?,
        Some("calibrate") => calibrate(serde_json::from_value(config).map_err(bad)?)?,
        Some("certify") => certify(serde_json::from_value(config).map_err(bad)?)?,
        Some("ftest") => ftest(serde_json::from_value(config).map_err(bad)?)?,
        Some("simulate") => simulate_config(&serde_json::from_value(config).map_err(bad)?, None)?,
        other => return Err(ScpcError::Input(format!("unknown command {other:?}"))),
    };
    Ok((value, args.out))
}

fn dispatch(command: Command) -> Result<(Value, Option<PathBuf>)> {
    match command {
        Command::Estimate(a) => {
            let out = a.out.clone();
            Ok((estimate(a)?, out))
        }
        Command::Calibrate(a) => {
            let out = a.out.clone();
            Ok((calibrate(a)?, out))
        }
        Command::Certify(a) => {
            let out = a.out.clone();
            Ok((certify(a)?, out))
        }
        Command::Ftest(a) => {
            let out = a.out.clone();
            Ok((ftest(a)?, out))
        }
        Command::Simulate(a) => {
            let out = a.out.clone();
            Ok((simulate(a)?, out))
        }
        Command::Rerun(a) => rerun(a),
    }
}

/// Exit code for an error: 2 for input problems, 3 otherwise.
pub fn exit_code(e: &ScpcError) -> i32 {
    if e.is_input() || matches!(e.root(), ScpcError::Calibration { .. } | ScpcError::Sampling { .. }) {
        2
    } else {
        3
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
/// Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
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
    match dispatch(cli.command).and_then(|(v, out)| write_json(&v, out.as_deref())) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
