//! Command implementations behind the `bellfilter` binary.
//!
//! Every command reads flags (optionally layered over a JSON config file
//! with the same keys), writes its outputs under `--out`, and returns the
//! text printed on stdout. Outputs depend only on the inputs and the seed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use bellfilter::polarization::ProductLabel;

mod commands;

pub use commands::{
    diagnose_repair, simulate, tomo_process, tomo_state, HoldoutResult, ProcessOutput, RepairFile, StateOutput,
    HOLDOUT_SEED_TAG,
};

#[derive(Debug, Parser)]
#[command(name = "bellfilter", version, about = "Simulate, reconstruct, diagnose and repair a two-photon singlet filter")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate coincidence counts for the 16 tomographic inputs.
    Simulate(SimulateArgs),
    /// Reconstruct the output state of one input row.
    TomoState(TomoStateArgs),
    /// Reconstruct the filter process, with bootstrap error bars.
    TomoProcess(TomoProcessArgs),
    /// Diagnose the leading Kraus operator and predict the repaired filter.
    DiagnoseRepair(DiagnoseRepairArgs),
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct SimulateArgs {
    /// JSON file with defaults for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Parameter preset: `ideal` or `paper-like` (default).
    #[arg(long)]
    pub preset: Option<String>,
    /// Birefringent phase in radians, or a multiple of pi such as `0.84pi`.
    #[arg(long, value_parser = parse_angle, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub visibility: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub splitting_imbalance: Option<f64>,
    /// Expected counts for a unit-probability setting.
    #[arg(long)]
    pub rate_scale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra inputs written to `holdout.csv` for validation, e.g. `LL,RR`.
    #[arg(long, value_delimiter = ',')]
    pub holdout: Option<Vec<ProductLabel>>,
    /// Rate scale for the holdout inputs (preset value by default).
    #[arg(long)]
    pub holdout_rate_scale: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct TomoStateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Counts CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input row to reconstruct; optional when the file has a single row.
    #[arg(long)]
    pub row: Option<ProductLabel>,
    /// Overrides the rate scale from the metadata sidecar.
    #[arg(long)]
    pub rate_scale: Option<f64>,
    /// Bootstrap replicas (0 disables).
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Bootstrap seed (defaults to the seed in the metadata).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct TomoProcessArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Counts CSV covering the 16 tomographic inputs.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub rate_scale: Option<f64>,
    /// Bootstrap replicas (default 100, 0 disables).
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Held-out inputs to predict and compare, e.g. `LL,RR`.
    #[arg(long, value_delimiter = ',')]
    pub holdout: Option<Vec<ProductLabel>>,
    /// Counts CSV for the held-out inputs (default: `holdout.csv` next to
    /// the input, else rows of the input itself).
    #[arg(long)]
    pub holdout_input: Option<PathBuf>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct DiagnoseRepairArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// `process.json` from `tomo-process`, or a bare superoperator JSON.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Ways a command can fail, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    /// Bad flags, files or data (exit 2).
    #[error("{0}")]
    Input(String),
    /// Outputs were written but an optimization did not converge or the
    /// bootstrap ensemble is unreliable (exit 3).
    #[error("{message}")]
    NotConverged { message: String, summary: String },
    /// The leading Kraus operator is not singlet-like (exit 4).
    #[error("{message}")]
    Refused { message: String, summary: String },
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::NotConverged { .. } => 3,
            Failure::Refused { .. } => 4,
        }
    }

    /// Text that should still be printed.
    pub fn summary(&self) -> Option<&str> {
        match self {
            Failure::Input(_) => None,
            Failure::NotConverged { summary, .. } | Failure::Refused { summary, .. } => Some(summary),
        }
    }
}

impl From<bellfilter::Error> for Failure {
    fn from(e: bellfilter::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

pub fn run(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::TomoState(a) => tomo_state(a),
        Command::TomoProcess(a) => tomo_process(a),
        Command::DiagnoseRepair(a) => diagnose_repair(a),
    }
}

/// Parses `1.2`, `0.84pi`, `-pi/2`-free forms: a number optionally followed
/// by `pi` or `π`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (num, scale) = if let Some(n) = t.strip_suffix("pi").or_else(|| t.strip_suffix('π')) {
        (n.trim(), std::f64::consts::PI)
    } else {
        (t, 1.0)
    };
    let value = match num {
        "" => 1.0,
        "-" => -1.0,
        n => n.parse::<f64>().map_err(|e| format!("bad angle `{s}`: {e}"))?,
    };
    Ok(value * scale)
}

/// Reads a config file into `T` when given.
pub(crate) fn load_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T, Failure> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Input(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Input(format!("bad config {}: {e}", p.display())))
        }
    }
}

/// Flags win over the config file, field by field.
macro_rules! layer {
    ($flags:expr, $file:expr, [$($field:ident),* $(,)?]) => {{
        let mut merged = $file;
        $( if $flags.$field.is_some() { merged.$field = $flags.$field.clone(); } )*
        merged.config = $flags.config.clone();
        merged
    }};
}

impl SimulateArgs {
    pub fn resolved(&self) -> Result<Self, Failure> {
        let file: Self = load_config(self.config.as_deref())?;
        Ok(layer!(
            self,
            file,
            [preset, phi, visibility, eta, splitting_imbalance, rate_scale, seed, holdout, holdout_rate_scale, out]
        ))
    }
}

impl TomoStateArgs {
    pub fn resolved(&self) -> Result<Self, Failure> {
        let file: Self = load_config(self.config.as_deref())?;
        Ok(layer!(self, file, [input, row, rate_scale, replicas, seed, max_iterations, grad_tol, out]))
    }
}

impl TomoProcessArgs {
    pub fn resolved(&self) -> Result<Self, Failure> {
        let file: Self = load_config(self.config.as_deref())?;
        Ok(layer!(
            self,
            file,
            [input, rate_scale, replicas, seed, holdout, holdout_input, max_iterations, grad_tol, out]
        ))
    }
}

impl DiagnoseRepairArgs {
    pub fn resolved(&self) -> Result<Self, Failure> {
        let file: Self = load_config(self.config.as_deref())?;
        Ok(layer!(self, file, [input, out]))
    }
}
