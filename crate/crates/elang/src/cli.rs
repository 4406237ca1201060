//! The `elang` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible
//! calibration target. Every successful run prints one JSON object to
//! standard output; diagnostics go to standard error.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use elang_core::{
    crossing_point_threshold, generate_synthetic, route_dataset, score_dataset, sweep,
    threshold_for_accuracy, threshold_for_budget, train_head, CostModel, Dataset, RoutingReport,
    ScoreHistogramPair, ScoreKind, SynthSpec, TrainConfig,
};
use serde_json::{json, Value};

use crate::config::FileConfig;
use crate::format::{self, threshold_json, FormatError};
use crate::gateway::{Gateway, GatewayConfig, HistogramSpec};

pub const DEFAULT_COST_SUPER: f64 = 87e11;
pub const DEFAULT_COST_SWIFT_ENC: f64 = 2.125e11;
pub const DEFAULT_COST_SWIFT_DEC: f64 = 2.125e11;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

impl From<elang_core::Error> for CliError {
    fn from(e: elang_core::Error) -> Self {
        match e {
            elang_core::Error::Infeasible(_) => CliError::Infeasible(e.to_string()),
            elang_core::Error::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Core(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "elang",
    version,
    about = "Energy-based Swift/Super routing toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic record file.
    Synth(SynthArgs),
    /// Train the energy head on encoder features and labels.
    TrainHead(TrainHeadArgs),
    /// Write one routing score per record.
    Score(ScoreArgs),
    /// Export the accuracy/cost curve over a threshold grid.
    Sweep(SweepArgs),
    /// Pick a threshold by density crossing, FLOPs budget or accuracy target.
    SelectThreshold(SelectArgs),
    /// Route every record at a fixed threshold.
    Route(RouteArgs),
    /// Run the routing gateway.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreName {
    Energy,
    EnergyHead,
    Softmax,
    Entropy,
    Random,
}

impl ScoreName {
    fn kind(self, seed: u64) -> ScoreKind {
        match self {
            ScoreName::Energy => ScoreKind::Energy,
            ScoreName::EnergyHead => ScoreKind::EnergyHead,
            ScoreName::Softmax => ScoreKind::Softmax,
            ScoreName::Entropy => ScoreKind::Entropy,
            ScoreName::Random => ScoreKind::Random { seed },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectMode {
    Crossing,
    Budget,
    Accuracy,
}

fn threshold_arg(s: &str) -> Result<f64, String> {
    format::parse_threshold(s).ok_or_else(|| format!("expected a number, +inf or -inf, got {s:?}"))
}

fn finite_arg(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("expected a finite number, got {s:?}"))
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Record file (JSON lines).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Manifest to check the records against (default: the sidecar, if any).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub score: Option<ScoreName>,
    /// Head checkpoint for `--score energy-head`.
    #[arg(long)]
    pub head: Option<PathBuf>,
    /// Seed of the random score.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long, value_parser = finite_arg)]
    pub cost_super: Option<f64>,
    #[arg(long, value_parser = finite_arg)]
    pub cost_swift_enc: Option<f64>,
    #[arg(long, value_parser = finite_arg)]
    pub cost_swift_dec: Option<f64>,
    #[arg(long, value_parser = finite_arg)]
    pub cost_head: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Also emit encoder features of this dimension.
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long, default_value_t = 0.97)]
    pub acc_easy: f64,
    #[arg(long, default_value_t = 0.55)]
    pub acc_hard: f64,
    #[arg(long, default_value_t = 0.9)]
    pub acc_super: f64,
    #[arg(long, default_value_t = 0.6)]
    pub easy_fraction: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    pub separation: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainHeadArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    /// Shuffle seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    /// Comma-separated thresholds (default: every distinct score and +-inf).
    #[arg(long, value_delimiter = ',', value_parser = threshold_arg, allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    /// Curve CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    #[arg(long, value_enum, default_value = "crossing")]
    pub mode: SelectMode,
    /// Expected FLOPs per input (budget mode).
    #[arg(long, value_parser = finite_arg)]
    pub budget: Option<f64>,
    /// Minimum accuracy (accuracy mode).
    #[arg(long, value_parser = finite_arg)]
    pub target_accuracy: Option<f64>,
    /// KDE bandwidth (crossing mode; default Silverman).
    #[arg(long, value_parser = finite_arg)]
    pub bandwidth: Option<f64>,
    #[arg(long, value_delimiter = ',', value_parser = threshold_arg, allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    /// Scores at or above go to Swift. Accepts +inf and -inf.
    #[arg(long, value_parser = threshold_arg, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Decisions file (records plus route and score).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub swift_url: Option<String>,
    #[arg(long)]
    pub super_url: Option<String>,
    #[arg(long, value_enum)]
    pub score: Option<ScoreName>,
    #[arg(long)]
    pub head: Option<PathBuf>,
    #[arg(long, value_parser = threshold_arg, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-backend timeout.
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub listen: Option<SocketAddr>,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match FileConfig::from_env() {
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
        Ok(config) => match run(cli.command, &config) {
            Ok(summary) => {
                let mut out = std::io::stdout().lock();
                let _ = writeln!(out, "{summary}");
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    }
}

pub fn run(command: Command, config: &FileConfig) -> Result<Value, CliError> {
    match command {
        Command::Synth(a) => synth(a, config),
        Command::TrainHead(a) => train(a, config),
        Command::Score(a) => score(a, config),
        Command::Sweep(a) => sweep_cmd(a, config),
        Command::SelectThreshold(a) => select(a, config),
        Command::Route(a) => route(a, config),
        Command::Serve(a) => serve(a, config),
    }
}

fn input_path(flag: Option<PathBuf>, config: &FileConfig) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.input.clone())
        .ok_or_else(|| CliError::Usage("--input is required".into()))
}

fn load(
    input: Option<PathBuf>,
    manifest: Option<PathBuf>,
    config: &FileConfig,
) -> Result<(PathBuf, Dataset), CliError> {
    let path = input_path(input, config)?;
    let manifest = manifest.or_else(|| config.manifest.clone());
    let ds = format::load_dataset(&path, manifest.as_deref())?;
    Ok((path, ds))
}

fn cost_model(a: &CostArgs, config: &FileConfig) -> Result<CostModel, CliError> {
    let cost = CostModel::new(
        a.cost_super
            .or(config.cost_super)
            .unwrap_or(DEFAULT_COST_SUPER),
        a.cost_swift_enc
            .or(config.cost_swift_enc)
            .unwrap_or(DEFAULT_COST_SWIFT_ENC),
        a.cost_swift_dec
            .or(config.cost_swift_dec)
            .unwrap_or(DEFAULT_COST_SWIFT_DEC),
    );
    let cost = match a.cost_head.or(config.cost_head) {
        Some(h) => cost.with_head(h),
        None => cost,
    };
    cost.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cost)
}

fn score_name(flag: Option<ScoreName>, config: &FileConfig) -> Result<ScoreName, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match &config.score {
        None => Ok(ScoreName::Energy),
        Some(s) => ScoreName::from_str(s, true)
            .map_err(|_| CliError::Usage(format!("unknown score kind {s:?} in config"))),
    }
}

struct Scored {
    path: PathBuf,
    dataset: Dataset,
    kind: ScoreKind,
    scores: Vec<f64>,
}

fn load_and_score(a: InputArgs, config: &FileConfig) -> Result<Scored, CliError> {
    let name = score_name(a.score, config)?;
    let seed = a.seed.or(config.seed).unwrap_or(0);
    let kind = name.kind(seed);
    let head_path = a.head.or_else(|| config.head.clone());
    let head = match (kind, head_path) {
        (ScoreKind::EnergyHead, Some(p)) => Some(format::load_head(&p)?),
        (ScoreKind::EnergyHead, None) => {
            return Err(CliError::Usage(
                "--score energy-head requires --head".into(),
            ))
        }
        _ => None,
    };
    let (path, dataset) = load(a.input, a.manifest, config)?;
    let scores = score_dataset(&dataset, kind, head.as_ref())?;
    Ok(Scored {
        path,
        dataset,
        kind,
        scores,
    })
}

fn report_json(r: &RoutingReport) -> Value {
    json!({
        "threshold": threshold_json(r.threshold),
        "n_swift": r.n_swift,
        "n_super": r.n_super,
        "swift_ratio": r.swift_ratio,
        "accuracy": r.accuracy,
        "expected_flops": r.expected_flops,
        "flops_speedup": r.flops_speedup,
        "latency_speedup": r.latency_speedup,
    })
}

fn path_json(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

fn synth(a: SynthArgs, config: &FileConfig) -> Result<Value, CliError> {
    let spec = SynthSpec {
        n_samples: a.n,
        swift_accuracy_easy: a.acc_easy,
        swift_accuracy_hard: a.acc_hard,
        super_accuracy: a.acc_super,
        easy_fraction: a.easy_fraction,
        score_separation: a.separation,
        seed: a.seed.or(config.seed).unwrap_or(SynthSpec::default().seed),
        num_classes: a.classes,
        feature_dim: a.features,
    };
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = generate_synthetic(&spec)?;
    format::save_dataset(&a.out, &ds)?;
    Ok(json!({
        "command": "synth",
        "out": path_json(&a.out),
        "n": ds.len(),
        "seed": spec.seed,
        "num_classes": ds.num_classes(),
        "feature_dim": ds.feature_dim(),
        "swift_accuracy": ds.swift_accuracy(),
        "super_accuracy": ds.super_accuracy(),
    }))
}

fn train(a: TrainHeadArgs, config: &FileConfig) -> Result<Value, CliError> {
    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        batch_size: a.batch_size,
        l2: a.l2,
        seed: a.seed.or(config.seed).unwrap_or(0),
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (path, ds) = load(a.input, a.manifest, config)?;
    let (head, report) = train_head(&ds, &cfg)?;
    format::save_head(&a.out, &head)?;
    Ok(json!({
        "command": "train-head",
        "input": path_json(&path),
        "out": path_json(&a.out),
        "num_classes": head.num_classes(),
        "feature_dim": head.feature_dim(),
        "epochs": report.epoch_losses.len(),
        "initial_loss": report.initial_loss,
        "final_loss": report.final_loss,
        "train_accuracy": report.train_accuracy,
        "step_halvings": report.step_halvings,
    }))
}

fn score(a: ScoreArgs, config: &FileConfig) -> Result<Value, CliError> {
    let s = load_and_score(a.input, config)?;
    if let Some(out) = &a.out {
        format::write_atomic(out, |w| format::write_scores(w, &s.dataset, &s.scores))?;
    }
    let n = s.scores.len() as f64;
    Ok(json!({
        "command": "score",
        "input": path_json(&s.path),
        "out": a.out.as_deref().map(path_json),
        "score": s.kind.name(),
        "n": s.scores.len(),
        "mean": s.scores.iter().sum::<f64>() / n,
        "min": s.scores.iter().copied().fold(f64::INFINITY, f64::min),
        "max": s.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }))
}

fn grid<'a>(flag: &'a Option<Vec<f64>>, config: &'a FileConfig) -> Option<&'a [f64]> {
    flag.as_deref().or(config.grid.as_deref())
}

fn sweep_cmd(a: SweepArgs, config: &FileConfig) -> Result<Value, CliError> {
    let cost = cost_model(&a.cost, config)?;
    let s = load_and_score(a.input, config)?;
    let curve = sweep(&s.dataset, &s.scores, &cost, grid(&a.grid, config))?;
    if let Some(out) = &a.out {
        format::write_atomic(out, |w| format::write_curve(w, &curve))?;
    }
    Ok(json!({
        "command": "sweep",
        "input": path_json(&s.path),
        "out": a.out.as_deref().map(path_json),
        "score": s.kind.name(),
        "points": curve.points.len(),
        "accuracy_area": curve.accuracy_area(),
        "lowest_threshold": report_json(curve.first()),
        "highest_threshold": report_json(curve.last()),
    }))
}

fn select(a: SelectArgs, config: &FileConfig) -> Result<Value, CliError> {
    let cost = cost_model(&a.cost, config)?;
    let budget = a.budget.or(config.budget);
    let target = a.target_accuracy.or(config.target_accuracy);
    match a.mode {
        SelectMode::Budget if budget.is_none() => {
            return Err(CliError::Usage("--mode budget requires --budget".into()))
        }
        SelectMode::Accuracy if target.is_none() => {
            return Err(CliError::Usage(
                "--mode accuracy requires --target-accuracy".into(),
            ))
        }
        _ => {}
    }
    let s = load_and_score(a.input, config)?;
    let threshold = match a.mode {
        SelectMode::Crossing => {
            let mut pair = ScoreHistogramPair::from_labeled(&s.dataset, &s.scores)?;
            pair.kde_bandwidth = a.bandwidth.or(config.bandwidth);
            crossing_point_threshold(&pair)?
        }
        SelectMode::Budget | SelectMode::Accuracy => {
            let curve = sweep(&s.dataset, &s.scores, &cost, grid(&a.grid, config))?;
            match a.mode {
                SelectMode::Budget => threshold_for_budget(&curve, budget.unwrap_or_default())?,
                _ => threshold_for_accuracy(&curve, target.unwrap_or_default())?,
            }
        }
    };
    let (_, report) = route_dataset(&s.dataset, &s.scores, threshold, &cost)?;
    Ok(json!({
        "command": "select-threshold",
        "input": path_json(&s.path),
        "mode": format!("{:?}", a.mode).to_lowercase(),
        "score": s.kind.name(),
        "threshold": threshold_json(threshold),
        "report": report_json(&report),
    }))
}

fn route(a: RouteArgs, config: &FileConfig) -> Result<Value, CliError> {
    let threshold = a
        .threshold
        .or(config.threshold)
        .ok_or_else(|| CliError::Usage("--threshold is required".into()))?;
    let cost = cost_model(&a.cost, config)?;
    let s = load_and_score(a.input, config)?;
    let (decisions, report) = route_dataset(&s.dataset, &s.scores, threshold, &cost)?;
    if let Some(out) = &a.out {
        format::write_atomic(out, |w| format::write_decisions(w, &s.dataset, &decisions))?;
    }
    Ok(json!({
        "command": "route",
        "input": path_json(&s.path),
        "out": a.out.as_deref().map(path_json),
        "score": s.kind.name(),
        "swift_accuracy": s.dataset.swift_accuracy(),
        "super_accuracy": s.dataset.super_accuracy(),
        "report": report_json(&report),
        "accuracy": report.accuracy,
    }))
}

fn serve(a: ServeArgs, config: &FileConfig) -> Result<Value, CliError> {
    let file = &config.serve;
    let swift_url = a
        .swift_url
        .or_else(|| file.swift_url.clone())
        .ok_or_else(|| CliError::Usage("--swift-url is required".into()))?;
    let super_url = a
        .super_url
        .or_else(|| file.super_url.clone())
        .ok_or_else(|| CliError::Usage("--super-url is required".into()))?;
    let seed = a.seed.or(config.seed).unwrap_or(0);
    let kind = score_name(a.score, config)?.kind(seed);
    let head = match a.head.or_else(|| config.head.clone()) {
        Some(p) if kind == ScoreKind::EnergyHead => Some(format::load_head(&p)?),
        _ => None,
    };
    let mut gw = GatewayConfig::new(swift_url, super_url);
    gw.score_kind = kind;
    gw.head = head;
    gw.initial_threshold = a.threshold.or(config.threshold).unwrap_or(0.0);
    gw.histogram = HistogramSpec::for_kind(kind);
    if let Some(ms) = a.timeout_ms.or(file.timeout_ms) {
        gw.timeout = Duration::from_millis(ms);
    }
    if let Some(addr) = a.listen {
        gw.listen = addr;
    } else if let Some(addr) = &file.listen {
        gw.listen = addr
            .parse()
            .map_err(|e| CliError::Usage(format!("listen address {addr:?}: {e}")))?;
    }
    let listen = gw.listen;
    let gateway = Gateway::new(gw).map_err(CliError::Usage)?;

    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Data(format!("cannot start runtime: {e}")))?;
    runtime
        .block_on(gateway.serve())
        .map_err(|e| CliError::Data(format!("gateway on {listen}: {e}")))?;
    Ok(json!({ "command": "serve", "listen": listen.to_string() }))
}
