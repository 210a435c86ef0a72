//! The `lipmbrl` command line.
//!
//! Every subcommand reads its parameters from flags, falling back to the
//! matching section of an optional TOML config file (`--config`), then to
//! built-in defaults. The resolved configuration is written to
//! `config.toml` in the output directory next to the CSVs.
//!
//! Exit codes: 0 success, 1 criterion or computation failure, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::decomposition::{decompose_all, decompose_kernel};
use crate::em::{self, EmConfig, MStepConfig, WeightConstraint};
use crate::error::Error;
use crate::experiments::acceptance::{self, SuiteConfig, Tolerances};
use crate::experiments::{self, report, Aggregation, CorrelationConfig, RewardMode};
use crate::fixtures;
use crate::gvi::{self, BackupOperator, GviConfig, SweepMode};
use crate::lipschitz::net::{LayeredNet, Norm};
use crate::lipschitz::{self, BoundInputs};
use crate::mdp::{Distribution, FiniteMetricMDP, GroundMetric};
use crate::metrics::{kl_divergence, total_variation, wasserstein_primal};
use crate::rng::seeded;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LIPMBRL_OUT";
const DEFAULT_OUT_DIR: &str = "lipmbrl-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "lipmbrl", version, about = "Lipschitz model-based RL toolkit")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $LIPMBRL_OUT, else ./lipmbrl-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel studies (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Tolerance override, `NAME=VALUE` (repeatable), e.g. `duality=1e-8`.
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare Wasserstein, total variation and KL on fixture pairs.
    MetricCompare(MetricCompareArgs),
    /// Decompose a kernel into weighted deterministic maps.
    Decompose(DecomposeArgs),
    /// Run generalized value iteration and report Lipschitz diagnostics.
    Gvi(GviArgs),
    /// Per-layer and network Lipschitz constants of a random network.
    LayerLipschitz(LayerArgs),
    /// Sample difference quotients of a backup operator.
    OperatorCheck(OperatorArgs),
    /// Multi-step prediction error against the compounding bound.
    Compounding(CompoundingArgs),
    /// Evaluate the compounding and value-error bounds.
    ValueBound(ValueBoundArgs),
    /// Random-MRP metric correlation study.
    Correlation(CorrelationArgs),
    /// Train a Lipschitz-capped mixture with EM on the five-function domain.
    EmTrain(EmArgs),
    /// Run every acceptance criterion.
    RunAll(RunAllArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::MetricCompare(_) => "metric_compare",
            Command::Decompose(_) => "decompose",
            Command::Gvi(_) => "gvi",
            Command::LayerLipschitz(_) => "layer_lipschitz",
            Command::OperatorCheck(_) => "operator_check",
            Command::Compounding(_) => "compounding",
            Command::ValueBound(_) => "value_bound",
            Command::Correlation(_) => "correlation",
            Command::EmTrain(_) => "em_train",
            Command::RunAll(_) => "run_all",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricCompareArgs {
    /// Shifted-constants pair: first constant.
    #[arg(long)]
    pub c1: Option<f64>,
    /// Shifted-constants pair: second constant.
    #[arg(long)]
    pub c2: Option<f64>,
    /// JSON file with `metric` (or `support`) and a list of `pairs`.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeArgs {
    /// Built-in fixture name (`gridworld`).
    #[arg(long)]
    pub fixture: Option<String>,
    /// MDP JSON file; takes precedence over `--fixture`.
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    /// Decompose one action only.
    #[arg(long)]
    pub action: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GviArgs {
    /// Built-in fixture name (`gridworld`).
    #[arg(long)]
    pub fixture: Option<String>,
    /// MDP JSON file; takes precedence over `--fixture`.
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    /// `max`, `mean`, `eps_greedy`, `mellowmax` or `boltzmann`.
    #[arg(long)]
    pub operator: Option<String>,
    /// ε for eps_greedy, β for mellowmax and boltzmann.
    #[arg(long)]
    pub param: Option<f64>,
    /// Stop when the sup-norm change falls below this (default 1e-10).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Iteration limit (default 100000).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Override the MDP discount.
    #[arg(long)]
    pub discount: Option<f64>,
    /// Write updates back within a sweep.
    #[arg(long)]
    pub in_place: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerArgs {
    /// Comma-separated layer widths, e.g. `1,16,1`.
    #[arg(long)]
    pub widths: Option<String>,
    /// `1`, `2` or `inf`.
    #[arg(long)]
    pub norm: Option<String>,
    /// Project every layer to this cap before reporting.
    #[arg(long)]
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorArgs {
    /// Operator name, or `name:param` (default `mellowmax:5`).
    #[arg(long)]
    pub operator: Option<String>,
    /// ε for eps_greedy, β for mellowmax and boltzmann.
    #[arg(long)]
    pub param: Option<f64>,
    /// Length of each sampled Q vector (default 4).
    #[arg(long)]
    pub actions: Option<usize>,
    /// Number of sampled vector pairs (default 10000).
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Entries are drawn from [-v_max, v_max] (default 10).
    #[arg(long)]
    pub v_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompoundingArgs {
    /// States per random instance (default 8).
    #[arg(long)]
    pub states: Option<usize>,
    /// Rollout length (default 6).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Number of random instances (default 200).
    #[arg(long)]
    pub instances: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueBoundArgs {
    /// One-step model error Δ (default 0.1).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Transition Lipschitz constant K̄ (default 1).
    #[arg(long)]
    pub k_bar: Option<f64>,
    /// Reward Lipschitz constant (default 1).
    #[arg(long)]
    pub k_r: Option<f64>,
    /// Discount (default 0.9).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Steps for the compounding bound (default 10).
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationArgs {
    /// Number of random MRP pairs, at least 30 (default 1000).
    #[arg(long)]
    pub trials: Option<usize>,
    /// States per MRP (default 10).
    #[arg(long)]
    pub states: Option<usize>,
    /// Comma-separated discounts.
    #[arg(long)]
    pub gammas: Option<String>,
    /// `index` or `uniform_0_10`.
    #[arg(long)]
    pub reward_mode: Option<String>,
    /// `mean` or `max`.
    #[arg(long)]
    pub aggregation: Option<String>,
    /// Steps of compounding error recorded per trial (default 6).
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmArgs {
    /// Lipschitz cap; omit or `inf` for unconstrained.
    #[arg(long)]
    pub k: Option<f64>,
    /// `1`, `2` or `inf` (default `inf`).
    #[arg(long)]
    pub norm: Option<String>,
    /// Clip weights elementwise instead of projecting.
    #[arg(long)]
    pub clip: Option<bool>,
    /// Mixture components (default 5).
    #[arg(long)]
    pub components: Option<usize>,
    /// Gaussian noise scale of each component (default 0.1).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// EM iterations (default 50).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Gradient steps per M-step (default 50).
    #[arg(long)]
    pub steps: Option<usize>,
    /// M-step step size (default 0.01).
    #[arg(long)]
    pub learn_rate: Option<f64>,
    /// Seed for the training sample (default 7).
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Points in the prediction grid.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunAllArgs {
    /// Trials for the correlation criteria (default 1000).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Skip the rerun that checks byte-identical output.
    #[arg(long)]
    pub skip_determinism: Option<bool>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub tolerances: Option<Tolerances>,
    pub metric_compare: Option<MetricCompareArgs>,
    pub decompose: Option<DecomposeArgs>,
    pub gvi: Option<GviArgs>,
    pub layer_lipschitz: Option<LayerArgs>,
    pub operator_check: Option<OperatorArgs>,
    pub compounding: Option<CompoundingArgs>,
    pub value_bound: Option<ValueBoundArgs>,
    pub correlation: Option<CorrelationArgs>,
    pub em_train: Option<EmArgs>,
    pub run_all: Option<RunAllArgs>,
}

/// Fully resolved configuration of one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub tolerances: Tolerances,
    /// The subcommand's merged parameters.
    pub params: toml::Table,
}

/// Field-wise merge: values set on the command line win over the file.
fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&T>) -> CliResult<T> {
    let mut base = match file {
        Some(f) => serde_json::to_value(f).map_err(usage)?,
        None => serde_json::Value::Object(Default::default()),
    };
    let over = serde_json::to_value(flags).map_err(usage)?;
    if let (Some(b), Some(o)) = (base.as_object_mut(), over.as_object()) {
        for (k, v) in o {
            if !v.is_null() {
                b.insert(k.clone(), v.clone());
            }
        }
    }
    serde_json::from_value(base).map_err(usage)
}

fn to_table<T: Serialize>(v: &T) -> CliResult<toml::Table> {
    toml::Table::try_from(v).map_err(usage)
}

fn load_file_config(path: &Path) -> CliResult<FileConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config file {}: {e}", path.display())))
}

fn apply_tolerance_overrides(tols: &mut Tolerances, overrides: &[String]) -> CliResult<()> {
    if overrides.is_empty() {
        return Ok(());
    }
    let mut value = serde_json::to_value(&*tols).map_err(usage)?;
    for item in overrides {
        let (name, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--tol expects NAME=VALUE, got {item:?}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--tol {name}: {v:?} is not a number")))?;
        let obj = value
            .as_object_mut()
            .expect("struct serializes to an object");
        if !obj.contains_key(name.trim()) {
            return Err(CliError::Usage(format!("unknown tolerance {name:?}")));
        }
        obj.insert(name.trim().to_string(), serde_json::json!(v));
    }
    *tols = serde_json::from_value(value).map_err(usage)?;
    Ok(())
}

/// Creates the output directory and checks that it accepts files.
fn prepare_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Usage(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })?;
    let probe = dir.join(".lipmbrl-write-check");
    fs::write(&probe, b"").map_err(|e| {
        CliError::Usage(format!(
            "output directory {} is not writable: {e}",
            dir.display()
        ))
    })?;
    let _ = fs::remove_file(probe);
    Ok(())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad {what} entry {t:?}")))
        })
        .collect()
}

fn load_mdp(
    path: Option<&PathBuf>,
    fixture: Option<&str>,
    discount: Option<f64>,
) -> CliResult<FiniteMetricMDP> {
    let mdp = match (path, fixture) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| {
                CliError::Usage(format!("cannot read MDP file {}: {e}", p.display()))
            })?;
            FiniteMetricMDP::from_json(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        (None, None) | (None, Some("gridworld")) => fixtures::gridworld(0.9),
        (None, Some(other)) => {
            return Err(CliError::Usage(format!(
                "unknown fixture {other:?} (known: gridworld)"
            )))
        }
    };
    match discount {
        Some(g) => mdp.with_discount(g).map_err(usage),
        None => Ok(mdp),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Failure(m) => eprintln!("failed: {m}"),
            }
            e.code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<i32> {
    let file = match &cli.config {
        Some(p) => load_file_config(p)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let out = cli
        .out
        .clone()
        .or_else(|| file.out.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let threads = cli.threads.or(file.threads);
    if threads == Some(0) {
        return Err(usage("--threads must be at least 1"));
    }
    let mut tolerances = file.tolerances.clone().unwrap_or_default();
    apply_tolerance_overrides(&mut tolerances, &cli.tol)?;
    tolerances.validate().map_err(usage)?;

    let params = match &cli.command {
        Command::MetricCompare(a) => to_table(&merge(a, file.metric_compare.as_ref())?)?,
        Command::Decompose(a) => to_table(&merge(a, file.decompose.as_ref())?)?,
        Command::Gvi(a) => to_table(&merge(a, file.gvi.as_ref())?)?,
        Command::LayerLipschitz(a) => to_table(&merge(a, file.layer_lipschitz.as_ref())?)?,
        Command::OperatorCheck(a) => to_table(&merge(a, file.operator_check.as_ref())?)?,
        Command::Compounding(a) => to_table(&merge(a, file.compounding.as_ref())?)?,
        Command::ValueBound(a) => to_table(&merge(a, file.value_bound.as_ref())?)?,
        Command::Correlation(a) => to_table(&merge(a, file.correlation.as_ref())?)?,
        Command::EmTrain(a) => to_table(&merge(a, file.em_train.as_ref())?)?,
        Command::RunAll(a) => to_table(&merge(a, file.run_all.as_ref())?)?,
    };
    let config = RunConfig {
        command: cli.command.name().to_string(),
        seed,
        out,
        threads,
        tolerances,
        params,
    };

    prepare_out_dir(&config.out)?;
    let echoed = format!(
        "# Resolved configuration. Parameters missing from [params] used built-in defaults.\n{}",
        toml::to_string(&config).map_err(usage)?
    );
    write_file(&config.out, "config.toml", &echoed)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Failure(e.to_string()))?;
    pool.install(|| dispatch(&config))
}

fn params<T: DeserializeOwned>(config: &RunConfig) -> CliResult<T> {
    config.params.clone().try_into().map_err(usage)
}

fn dispatch(config: &RunConfig) -> CliResult<i32> {
    match config.command.as_str() {
        "metric_compare" => cmd_metric_compare(config, params(config)?),
        "decompose" => cmd_decompose(config, params(config)?),
        "gvi" => cmd_gvi(config, params(config)?),
        "layer_lipschitz" => cmd_layer_lipschitz(config, params(config)?),
        "operator_check" => cmd_operator_check(config, params(config)?),
        "compounding" => cmd_compounding(config, params(config)?),
        "value_bound" => cmd_value_bound(config, params(config)?),
        "correlation" => cmd_correlation(config, params(config)?),
        "em_train" => cmd_em_train(config, params(config)?),
        "run_all" => cmd_run_all(config, params(config)?),
        other => Err(CliError::Usage(format!("unknown command {other}"))),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricFixture {
    #[serde(default)]
    metric: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    support: Option<Vec<f64>>,
    pairs: Vec<FixturePair>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixturePair {
    name: String,
    mu1: Vec<f64>,
    mu2: Vec<f64>,
}

fn metric_row(
    name: &str,
    a: &Distribution,
    b: &Distribution,
    metric: &GroundMetric,
) -> CliResult<Vec<String>> {
    let (w, _) = wasserstein_primal(a, b, metric)?;
    Ok(vec![
        name.to_string(),
        report::num(w),
        report::num(total_variation(a, b)?),
        report::num(kl_divergence(a, b)?),
    ])
}

pub fn cmd_metric_compare(config: &RunConfig, args: MetricCompareArgs) -> CliResult<i32> {
    let mut rows = Vec::new();
    let (c1, c2) = (args.c1.unwrap_or(2.0), args.c2.unwrap_or(0.5));
    if !(c1.is_finite() && c2.is_finite()) {
        return Err(usage("shifted constants must be finite"));
    }
    let (_, a, b, metric) = fixtures::shifted_constants(c1, c2);
    rows.push(metric_row(
        &format!("shifted_constants({c1},{c2})"),
        &a,
        &b,
        &metric,
    )?);

    if let Some(path) = &args.fixture {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read fixture file {}: {e}", path.display()))
        })?;
        let fx: MetricFixture = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let metric = match (fx.metric, fx.support) {
            (Some(rows), None) => GroundMetric::from_rows(rows)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
            (None, Some(points)) => GroundMetric::line(&points),
            _ => {
                return Err(CliError::Usage(format!(
                    "{}: give exactly one of `metric` or `support`",
                    path.display()
                )))
            }
        };
        for p in fx.pairs {
            let bad =
                |e: Error| CliError::Usage(format!("{}: pair {}: {e}", path.display(), p.name));
            let a = Distribution::new(p.mu1.clone()).map_err(bad)?;
            let b = Distribution::new(p.mu2.clone()).map_err(bad)?;
            rows.push(metric_row(&p.name, &a, &b, &metric).map_err(|e| match e {
                CliError::Failure(m) => {
                    CliError::Usage(format!("{}: pair {}: {m}", path.display(), p.name))
                }
                other => other,
            })?);
        }
    }
    let csv = report::table(
        &["case", "wasserstein", "total_variation", "kl"],
        rows.clone(),
    )?;
    write_file(&config.out, "metric_compare.csv", &csv)?;
    for r in rows {
        println!("{:<32} W={:<12} TV={:<12} KL={}", r[0], r[1], r[2], r[3]);
    }
    Ok(EXIT_OK)
}

pub fn cmd_decompose(config: &RunConfig, args: DecomposeArgs) -> CliResult<i32> {
    let mdp = load_mdp(args.mdp.as_ref(), args.fixture.as_deref(), None)?;
    let class = match args.action {
        Some(a) => decompose_kernel(mdp.transitions(), a).map_err(usage)?,
        None => decompose_all(&mdp)?,
    };
    let deviation = match args.action {
        Some(a) => crate::decomposition::reconstruct_kernel_and_check(
            &mdp.transitions().action(a)?,
            &class,
        )?,
        None => crate::decomposition::reconstruct_and_check(&mdp, &class)?,
    };
    let k_f = crate::decomposition::model_class_lipschitz(&class, mdp.metric())?;
    let mut rows = Vec::new();
    for (f, map) in class.maps().iter().enumerate() {
        for a in 0..class.n_actions() {
            let action = args.action.unwrap_or(a);
            rows.push(vec![
                f.to_string(),
                action.to_string(),
                report::num(class.weights()[a][f]),
                map.iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
            ]);
        }
    }
    write_file(
        &config.out,
        "decomposition.csv",
        &report::table(&["map", "action", "weight", "targets"], rows)?,
    )?;
    println!(
        "{} maps, reconstruction deviation {deviation:.3e}, K_F = {k_f}",
        class.maps().len()
    );
    Ok(EXIT_OK)
}

fn operator_from(
    kind: Option<&str>,
    param: Option<f64>,
    default: &str,
) -> CliResult<BackupOperator> {
    let kind = kind.unwrap_or(default);
    let op = if kind.contains(':') {
        kind.parse().map_err(usage)?
    } else {
        BackupOperator::from_parts(kind, param).map_err(usage)?
    };
    op.validate().map_err(usage)?;
    Ok(op)
}

pub fn cmd_gvi(config: &RunConfig, args: GviArgs) -> CliResult<i32> {
    let mdp = load_mdp(args.mdp.as_ref(), args.fixture.as_deref(), args.discount)?;
    let op = operator_from(args.operator.as_deref(), args.param, "max")?;
    let tolerance = args.tolerance.unwrap_or(1e-10);
    if !(tolerance > 0.0) {
        return Err(usage(format!("tolerance {tolerance} must be positive")));
    }
    let gvi_config = GviConfig {
        tolerance,
        max_iters: args.max_iters.unwrap_or(100_000),
        sweep: if args.in_place.unwrap_or(false) {
            SweepMode::InPlace
        } else {
            SweepMode::Synchronous
        },
    };
    let out = gvi::gvi_run(&mdp, op, gvi_config)?;
    let mut rows = Vec::new();
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            rows.push(vec![
                s.to_string(),
                a.to_string(),
                report::num(out.q.get(s, a)),
            ]);
        }
    }
    write_file(
        &config.out,
        "q.csv",
        &report::table(&["state", "action", "q"], rows)?,
    )?;

    let k_w = lipschitz::kernel_wasserstein_lipschitz(mdp.transitions(), mdp.metric())?.max;
    let k_r = gvi::reward_lipschitz(mdp.rewards(), 1, mdp.metric())?;
    let empirical = gvi::empirical_q_lipschitz(&out.q, mdp.metric())?;
    let bound = match lipschitz::gvi_value_lipschitz_bound(k_r, mdp.discount(), k_w) {
        Ok(b) => Some(b),
        Err(Error::BoundInapplicable(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let diag = report::table(
        &[
            "operator",
            "gamma",
            "iterations",
            "residual",
            "k_w",
            "k_r",
            "empirical_lipschitz",
            "bound",
        ],
        [vec![
            op.to_string(),
            report::num(mdp.discount()),
            out.iterations.to_string(),
            report::num(out.residual),
            report::num(k_w),
            report::num(k_r),
            report::num(empirical),
            bound
                .map(report::num)
                .unwrap_or_else(|| "inapplicable".into()),
        ]],
    )?;
    write_file(&config.out, "gvi_diagnostics.csv", &diag)?;
    println!(
        "{op}: {} sweeps, residual {:.2e}, empirical Lipschitz {empirical:.6}, bound {}",
        out.iterations,
        out.residual,
        bound
            .map(|b| format!("{b:.6}"))
            .unwrap_or_else(|| "inapplicable (gamma*K_W >= 1)".into())
    );
    Ok(EXIT_OK)
}

pub fn cmd_layer_lipschitz(config: &RunConfig, args: LayerArgs) -> CliResult<i32> {
    let widths: Vec<usize> = parse_list(args.widths.as_deref().unwrap_or("1,16,1"), "width")?;
    let norm: Norm = args
        .norm
        .as_deref()
        .unwrap_or("inf")
        .parse()
        .map_err(usage)?;
    let mut rng = seeded(config.seed);
    let mut net = LayeredNet::random(&widths, &mut rng).map_err(usage)?;
    if let Some(cap) = args.cap {
        if !(cap > 0.0) {
            return Err(usage(format!("cap {cap} must be positive")));
        }
        net.project(norm, cap);
    }
    let mut rows: Vec<Vec<String>> = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            vec![
                i.to_string(),
                norm.to_string(),
                report::num(lipschitz::layer_lipschitz(l, norm)),
            ]
        })
        .collect();
    let total = lipschitz::network_lipschitz(&net, norm);
    rows.push(vec!["network".into(), norm.to_string(), report::num(total)]);
    write_file(
        &config.out,
        "layer_lipschitz.csv",
        &report::table(&["layer", "norm", "constant"], rows)?,
    )?;
    println!("network constant under p={norm}: {total}");
    Ok(EXIT_OK)
}

pub fn cmd_operator_check(config: &RunConfig, args: OperatorArgs) -> CliResult<i32> {
    let op = operator_from(args.operator.as_deref(), args.param, "mellowmax:5")?;
    let actions = args.actions.unwrap_or(4);
    let pairs = args.pairs.unwrap_or(10_000);
    let v_max = args.v_max.unwrap_or(10.0);
    if actions == 0 || pairs == 0 || !(v_max > 0.0) {
        return Err(usage("actions, pairs and v_max must be positive"));
    }
    let mut rng = seeded(config.seed);
    let samples = lipschitz::sample_vector_pairs(&mut rng, actions, pairs, v_max);
    let check = lipschitz::operator_constant_check(&op, &samples, Some(v_max))?;
    let holds = check.holds(config.tolerances.operator);
    write_file(
        &config.out,
        "operator_check.csv",
        &report::table(
            &[
                "operator",
                "actions",
                "pairs",
                "max_ratio",
                "constant",
                "holds",
            ],
            [vec![
                op.to_string(),
                actions.to_string(),
                pairs.to_string(),
                report::num(check.max_ratio),
                report::num(check.constant),
                holds.to_string(),
            ]],
        )?,
    )?;
    println!(
        "{op}: max ratio {:.6} against constant {:.6}",
        check.max_ratio, check.constant
    );
    Ok(if holds { EXIT_OK } else { EXIT_FAILURE })
}

pub fn cmd_compounding(config: &RunConfig, args: CompoundingArgs) -> CliResult<i32> {
    let states = args.states.unwrap_or(8);
    let horizon = args.horizon.unwrap_or(6);
    let instances = args.instances.unwrap_or(200);
    if states < 2 || horizon == 0 || instances == 0 {
        return Err(usage("need states >= 2, horizon >= 1 and instances >= 1"));
    }
    use rayon::prelude::*;
    let reports = (0..instances as u64)
        .into_par_iter()
        .map(|i| experiments::compounding_instance(config.seed, i, states, horizon))
        .collect::<crate::Result<Vec<_>>>()?;
    write_file(
        &config.out,
        "compounding.csv",
        &report::compounding_csv(&reports)?,
    )?;
    let c = acceptance::compounding(&reports, config.tolerances.compounding)?;
    println!("{}", c.line());
    Ok(if c.passed { EXIT_OK } else { EXIT_FAILURE })
}

pub fn cmd_value_bound(config: &RunConfig, args: ValueBoundArgs) -> CliResult<i32> {
    let inputs = BoundInputs {
        delta: args.delta.unwrap_or(0.1),
        k_bar: args.k_bar.unwrap_or(1.0),
        k_r: args.k_r.unwrap_or(1.0),
        gamma: args.gamma.unwrap_or(0.9),
        horizon: args.horizon.unwrap_or(10),
    };
    inputs.validate().map_err(usage)?;
    let compounding = lipschitz::compounding_bound(&inputs);
    let value = match lipschitz::value_bound(&inputs) {
        Ok(v) => Some(v),
        Err(Error::BoundInapplicable(_)) => None,
        Err(e) => return Err(e.into()),
    };
    write_file(
        &config.out,
        "value_bound.csv",
        &report::table(
            &[
                "delta",
                "k_bar",
                "k_r",
                "gamma",
                "horizon",
                "compounding_bound",
                "value_bound",
            ],
            [vec![
                report::num(inputs.delta),
                report::num(inputs.k_bar),
                report::num(inputs.k_r),
                report::num(inputs.gamma),
                inputs.horizon.to_string(),
                report::num(compounding),
                value
                    .map(report::num)
                    .unwrap_or_else(|| "inapplicable".into()),
            ]],
        )?,
    )?;
    println!("compounding bound at n={}: {compounding}", inputs.horizon);
    match value {
        Some(v) => println!("value bound: {v}"),
        None => println!("value bound: inapplicable (gamma * K_bar >= 1)"),
    }
    Ok(EXIT_OK)
}

pub fn cmd_correlation(config: &RunConfig, args: CorrelationArgs) -> CliResult<i32> {
    let defaults = CorrelationConfig::default();
    let study_config = CorrelationConfig {
        n_trials: args.trials.unwrap_or(defaults.n_trials),
        n_states: args.states.unwrap_or(defaults.n_states),
        gammas: match &args.gammas {
            Some(g) => parse_list(g, "gamma")?,
            None => defaults.gammas,
        },
        reward_mode: match &args.reward_mode {
            Some(m) => m.parse::<RewardMode>().map_err(usage)?,
            None => defaults.reward_mode,
        },
        aggregation: match args.aggregation.as_deref() {
            None | Some("mean") => Aggregation::Mean,
            Some("max") => Aggregation::Max,
            Some(other) => {
                return Err(usage(format!(
                    "unknown aggregation {other:?} (mean or max)"
                )))
            }
        },
        horizon: args.horizon.unwrap_or(defaults.horizon),
        seed: config.seed,
        identical_model: false,
    };
    let study = experiments::metric_correlation_study(&study_config).map_err(|e| match e {
        Error::InvalidArgument(m) => CliError::Usage(m),
        other => other.into(),
    })?;
    write_file(
        &config.out,
        "trials.csv",
        &report::trials_csv(&study.trials, study_config.horizon)?,
    )?;
    write_file(
        &config.out,
        "correlations.csv",
        &report::correlations_csv(&[&study])?,
    )?;
    write_file(&config.out, "plot.gp", report::PLOT_SCRIPT)?;
    for s in &study.summaries {
        let f = |m: &experiments::MetricCorrelation| {
            m.correlation
                .map(|c| format!("{c:.4}"))
                .unwrap_or_else(|| "undefined".into())
        };
        println!(
            "gamma {:<5} W {:<9} TV {:<9} KL {:<9} (KL excluded {})",
            s.gamma,
            f(&s.wasserstein),
            f(&s.total_variation),
            f(&s.kl),
            s.kl.excluded
        );
    }
    Ok(EXIT_OK)
}

pub fn cmd_em_train(config: &RunConfig, args: EmArgs) -> CliResult<i32> {
    let norm: Norm = args
        .norm
        .as_deref()
        .unwrap_or("inf")
        .parse()
        .map_err(usage)?;
    let constraint = match args.k {
        Some(k) if k.is_finite() => {
            if !(k > 0.0) {
                return Err(usage(format!("cap k = {k} must be positive")));
            }
            if args.clip.unwrap_or(false) {
                WeightConstraint::Clip { cap: k }
            } else {
                WeightConstraint::Project { norm, cap: k }
            }
        }
        _ => WeightConstraint::None,
    };
    let defaults = EmConfig::default();
    let em_config = EmConfig {
        n_components: args.components.unwrap_or(defaults.n_components),
        sigma: args.sigma.unwrap_or(defaults.sigma),
        em_iters: args.iters.unwrap_or(defaults.em_iters),
        seed: config.seed,
        m_step: MStepConfig {
            steps: args.steps.unwrap_or(defaults.m_step.steps),
            learn_rate: args.learn_rate.unwrap_or(defaults.m_step.learn_rate),
            constraint,
            ..defaults.m_step
        },
        ..defaults
    };
    if !(em_config.sigma > 0.0) || !(em_config.m_step.learn_rate > 0.0) {
        return Err(usage("sigma and learn_rate must be positive"));
    }
    let data = fixtures::supervised_data(
        fixtures::SUPERVISED_SAMPLES_PER_FUNCTION,
        args.data_seed.unwrap_or(7),
    );
    let fit = em::em_fit(&data, &em_config).map_err(|e| match e {
        Error::InvalidArgument(m) => CliError::Usage(m),
        other => other.into(),
    })?;
    let grid = fixtures::supervised_test_grid(args.grid.unwrap_or(101));
    let loss = em::mixture_wasserstein_loss(&fit.model, &fixtures::SUPERVISED_FUNCTIONS, &grid)?;

    write_file(
        &config.out,
        "em_trace.csv",
        &report::table(
            &["iteration", "elbo", "weighted_mse"],
            fit.trace.iter().map(|t| {
                vec![
                    t.iteration.to_string(),
                    report::num(t.elbo),
                    report::num(t.weighted_mse),
                ]
            }),
        )?,
    )?;
    let mut rows = Vec::new();
    for &x in &grid {
        for (c, (y, g)) in fit.model.predict(x).into_iter().enumerate() {
            rows.push(vec![
                report::num(x),
                c.to_string(),
                report::num(y),
                report::num(g),
            ]);
        }
    }
    write_file(
        &config.out,
        "em_predictions.csv",
        &report::table(&["x", "component", "prediction", "mixing"], rows)?,
    )?;
    let last = fit.trace.last().expect("trace has the initial entry");
    println!(
        "final ELBO {:.4}, weighted MSE {:.5}, test Wasserstein loss {loss:.5}",
        last.elbo, last.weighted_mse
    );
    Ok(EXIT_OK)
}

pub fn cmd_run_all(config: &RunConfig, args: RunAllArgs) -> CliResult<i32> {
    let suite = SuiteConfig {
        seed: config.seed,
        tolerances: config.tolerances.clone(),
        correlation_trials: args.trials.unwrap_or(1000),
        ..SuiteConfig::default()
    };
    suite.validate().map_err(usage)?;
    let out = &config.out;
    let mut done: Vec<acceptance::Criterion> = Vec::new();
    let result = acceptance::run_suite(&suite, |c| {
        println!("{}", c.line());
        done.push(c.clone());
        // Keep a partial summary on disk in case a later criterion errors.
        if let Ok(csv) = summary_of(&done) {
            let _ = fs::write(out.join("summary.csv"), csv);
        }
    });
    let mut output = match result {
        Ok(o) => o,
        Err(e) => return Err(CliError::Failure(format!("suite aborted: {e}"))),
    };
    for (name, contents) in &output.files {
        write_file(out, name, contents)?;
    }
    if !args.skip_determinism.unwrap_or(false) {
        let c = acceptance::determinism(&suite, &output)?;
        println!("{}", c.line());
        output.criteria.push(c);
    }
    write_file(out, "summary.csv", &output.summary_csv()?)?;
    let failed = output.criteria.iter().filter(|c| !c.passed).count();
    println!(
        "{} of {} criteria passed",
        output.criteria.len() - failed,
        output.criteria.len()
    );
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

fn summary_of(criteria: &[acceptance::Criterion]) -> crate::Result<String> {
    acceptance::SuiteOutput {
        criteria: criteria.to_vec(),
        files: Vec::new(),
    }
    .summary_csv()
}
