//! `ssepwalk`: command-line driver for the exclusion-driven walk simulator.
//!
//! Exit codes: 0 ran to completion, 1 identity check failed (or a verdict
//! failed under `--strict`), 2 usage error, 3 I/O error, 4 malformed event
//! log, 5 simulation error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};
use ssep_walk::{LogFormatError, SimError};
use thiserror::Error;

pub use config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "ssepwalk", version, about = "Random walk slowed by a symmetric exclusion environment")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Read flags from a `key = value` file; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Write the effective configuration to FILE and exit without running.
    #[arg(long, global = true, value_name = "FILE")]
    pub write_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Annealed replicas: per-run CSV plus summary JSON.
    Simulate(SimulateArgs),
    /// Several walks in each of several fixed environments.
    Quenched(QuenchedArgs),
    /// Exhaustive check of the corrector generator identities.
    Verify(VerifyArgs),
    /// Write environment logs (and optionally the walks run on them).
    Record(RecordArgs),
    /// Run walks on recorded environment logs.
    Replay(ReplayArgs),
    /// Exceedance probabilities of the centred drift functional along a time grid.
    RateProbe(RateProbeArgs),
    /// Space-time box covariances of the stationary exclusion process.
    Decouple(DecoupleArgs),
    /// Sixth moments of the walk along a time grid.
    Moments(MomentsArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::Quenched(_) => "quenched",
            Self::Verify(_) => "verify",
            Self::Record(_) => "record",
            Self::Replay(_) => "replay",
            Self::RateProbe(_) => "rate-probe",
            Self::Decouple(_) => "decouple",
            Self::Moments(_) => "moments",
        }
    }

    fn fields(&self) -> serde_json::Value {
        let value = match self {
            Self::Simulate(a) => serde_json::to_value(a),
            Self::Quenched(a) => serde_json::to_value(a),
            Self::Verify(a) => serde_json::to_value(a),
            Self::Record(a) => serde_json::to_value(a),
            Self::Replay(a) => serde_json::to_value(a),
            Self::RateProbe(a) => serde_json::to_value(a),
            Self::Decouple(a) => serde_json::to_value(a),
            Self::Moments(a) => serde_json::to_value(a),
        };
        value.expect("argument structs serialize")
    }

    pub fn to_config(&self) -> RunConfig {
        RunConfig::from_json(self.name(), &self.fields())
    }
}

const SUBCOMMANDS: [&str; 8] = [
    "simulate",
    "quenched",
    "verify",
    "record",
    "replay",
    "rate-probe",
    "decouple",
    "moments",
];

pub fn parse_seed(raw: &str) -> Result<u64, String> {
    let parsed = match raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => raw.parse(),
    };
    parsed.map_err(|_| format!("'{raw}' is not a decimal or 0x-hex 64-bit seed"))
}

fn hex<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{seed:#x}"))
}

fn hex_opt<S: Serializer>(seed: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
    match seed {
        Some(v) => hex(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Density of the exclusion environment.
    #[arg(long)]
    pub rho: f64,
    /// Slow-down on occupied sites: jump rate 1 - lambda per neighbour.
    #[arg(long)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long = "T", value_name = "T")]
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Torus size; defaults to max(1024, 24 sqrt(T)) rounded up to even.
    #[arg(long = "L", value_name = "L")]
    #[serde(rename = "L")]
    pub sites: Option<u32>,
    #[arg(long, value_parser = parse_seed, default_value = "0xC0FFEE")]
    #[serde(serialize_with = "hex")]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 200)]
    pub replicas: usize,
    /// Per-run CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON; defaults to the CSV path with a .json extension.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Generate environment and walk in one pass without storing the log.
    #[arg(long)]
    pub no_log: bool,
    /// Exit with code 1 when a verdict fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct QuenchedArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub environments: usize,
    #[arg(long)]
    pub walks_per_env: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct VerifyArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub n_max: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub ell_max: u32,
    /// Window radius W: configurations live on {-W, ..., W}.
    #[arg(long)]
    pub window: u32,
    /// Rational arithmetic; otherwise f64 with tolerance 1e-12.
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RecordArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    /// Number of environments; with more than one, --log-out is a directory.
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
    #[arg(long)]
    pub log_out: PathBuf,
    /// Optional CSV of the walks run alongside the recorded environments.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReplayArgs {
    /// Log files, or directories of *.sseplog files.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub log_in: Vec<PathBuf>,
    #[arg(long)]
    pub lambda: f64,
    /// Master seed of the walk streams; defaults to the one in each log.
    #[arg(long, value_parser = parse_seed)]
    #[serde(serialize_with = "hex_opt")]
    pub seed: Option<u64>,
    /// Walk stream index; defaults to each log's environment index.
    #[arg(long)]
    pub walk_id: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RateProbeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "250,1000,4000")]
    pub t_grid: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 400)]
    pub replicas: usize,
    /// Torus size; defaults to the rule for the largest grid time.
    #[arg(long = "L", value_name = "L")]
    #[serde(rename = "L")]
    pub sites: Option<u32>,
    #[arg(long, value_parser = parse_seed, default_value = "0xC0FFEE")]
    #[serde(serialize_with = "hex")]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct MomentsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "100,400,1600")]
    pub t_grid: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub replicas: usize,
    #[arg(long = "L", value_name = "L")]
    #[serde(rename = "L")]
    pub sites: Option<u32>,
    #[arg(long, value_parser = parse_seed, default_value = "0xC0FFEE")]
    #[serde(serialize_with = "hex")]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirstBox {
    /// Indicator that the box density exceeds rho.
    Density,
    /// The value of --constant.
    Constant,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DecoupleArgs {
    #[arg(long)]
    pub rho: f64,
    /// Box side: boxes cover H + 1 sites over the time interval [0, H].
    #[arg(long, default_value_t = 64)]
    pub h: u32,
    /// Left ends of the second box; defaults to ceil(H^0.6).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub separations: Option<Vec<i64>>,
    #[arg(long, default_value_t = 2000)]
    pub replicas: usize,
    #[arg(long = "L", value_name = "L")]
    #[serde(rename = "L")]
    pub sites: Option<u32>,
    #[arg(long, value_parser = parse_seed, default_value = "0xC0FFEE")]
    #[serde(serialize_with = "hex")]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FirstBox::Density)]
    pub first: FirstBox,
    #[arg(long, default_value_t = 0.5)]
    pub constant: f64,
    /// Verdict threshold on |covariance|.
    #[arg(long, default_value_t = 0.05)]
    pub max_abs_cov: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    MalformedLog { path: PathBuf, source: LogFormatError },
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Simulation(SimError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Failed(_) => 1,
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Io { .. } => 3,
            Self::MalformedLog { source, .. } if source.line().is_none() => 3,
            Self::MalformedLog { .. } => 4,
            Self::Simulation(_) => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidPlan(_) | SimError::Model(_) => Self::Usage(e.to_string()),
            other => Self::Simulation(other),
        }
    }
}

/// Splices the flags of `--config FILE` in right after the subcommand, so
/// that flags given on the command line override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path = None;
    for (i, arg) in args.iter().enumerate().skip(1) {
        let text = arg.to_string_lossy();
        if text == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = text.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let config = RunConfig::parse(&text)?;
    let position = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()));
    let mut out = args;
    let at = match (position, config.command()) {
        (Some(p), Some(cmd)) if out[p] != cmd => {
            return Err(CliError::Usage(format!(
                "config is for '{cmd}' but the command line asks for '{}'",
                out[p].to_string_lossy()
            )))
        }
        (Some(p), _) => p + 1,
        (None, Some(cmd)) if SUBCOMMANDS.contains(&cmd) => {
            out.insert(1, cmd.into());
            2
        }
        (None, _) => return Err(CliError::Usage("no subcommand given on the command line or in the config".into())),
    };
    out.splice(at..at, config.to_flags());
    Ok(out)
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run(args: Vec<OsString>) -> i32 {
    let args = match expand_config(args) {
        Ok(args) => args,
        Err(e) => return report(e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Some(path) = &cli.write_config {
        let result = cli
            .command
            .to_config()
            .render()
            .map_err(CliError::from)
            .and_then(|text| std::fs::write(path, text).map_err(|e| CliError::io(path, e)));
        return match result {
            Ok(()) => 0,
            Err(e) => report(e),
        };
    }
    match commands::execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
