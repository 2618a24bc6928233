use clap::{Args, Parser, Subcommand, ValueEnum};
use nssgan::scalespace::{FilterKind, DEFAULT_BETA, DEFAULT_SIGMA, DEFAULT_T0};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Seed used by every subcommand when `--seed` is absent.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "nssgan", version, about = "Noisy scale-space GAN toolkit")]
pub struct Cli {
    /// Worker threads for data-parallel stages (outputs do not depend on it)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate the Hadamard-basis synthetic dataset
    GenHadamard(GenHadamardArgs),
    /// Apply SS, NS or NSS filtering to every image of a tensor file
    Filter(FilterArgs),
    /// Tabulate the annealing schedule of t
    Anneal(AnnealArgs),
    /// Pooled variance of a filtered batch as a function of t
    VarianceCurve(VarianceCurveArgs),
    /// Train the GAN on a tensor file
    Train(TrainArgs),
    /// Draw fakes from a checkpoint
    Sample(SampleArgs),
    /// Hadamard coefficient statistics of a batch, optionally against real data
    Eval(EvalArgs),
    /// Write images of a tensor file as binary PGM
    ExportPgm(ExportPgmArgs),
    /// Re-run a stored manifest, rewriting its outputs
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenHadamard(_) => "gen-hadamard",
            Command::Filter(_) => "filter",
            Command::Anneal(_) => "anneal",
            Command::VarianceCurve(_) => "variance-curve",
            Command::Train(_) => "train",
            Command::Sample(_) => "sample",
            Command::Eval(_) => "eval",
            Command::ExportPgm(_) => "export-pgm",
            Command::Replay(_) => "replay",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::GenHadamard(a) => Some(a.seed),
            Command::Filter(a) => Some(a.seed),
            Command::Anneal(a) => Some(a.seed),
            Command::VarianceCurve(a) => Some(a.seed),
            Command::Train(a) => Some(a.seed),
            Command::Sample(a) => Some(a.seed),
            Command::Eval(a) => Some(a.seed),
            Command::ExportPgm(a) => Some(a.seed),
            Command::Replay(_) => None,
        }
    }

    /// Fill in defaults that depend on other flags so a manifest is self-contained.
    pub fn resolved(mut self) -> Self {
        match &mut self {
            Command::Train(a) => {
                if a.t.is_none() {
                    a.big_t.get_or_insert(DEFAULT_T0);
                    a.beta.get_or_insert(DEFAULT_BETA);
                }
                a.history = Some(a.history_path());
            }
            Command::Eval(a) => a.report = Some(a.report_path()),
            _ => {}
        }
        self
    }
}

fn parse_kind(s: &str) -> Result<FilterKind, String> {
    s.parse::<FilterKind>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenHadamardArgs {
    /// Number of 8×8 images
    #[arg(long, default_value_t = nssgan::hadamard::DEFAULT_COUNT)]
    pub count: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output tensor file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FilterArgs {
    #[arg(long, value_parser = parse_kind, default_value = "nss")]
    pub kind: FilterKind,
    /// Number of filter steps
    #[arg(long, default_value_t = 8)]
    pub t: u32,
    /// Per-step noise std
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AnnealArgs {
    /// Initial time
    #[arg(long = "T", default_value_t = DEFAULT_T0)]
    pub big_t: u32,
    /// Decay power
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    /// Evenly spaced points over i in [0, 1]
    #[arg(long, default_value_t = 11)]
    pub samples: usize,
    /// Accepted for uniformity; the schedule is deterministic
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// CSV output (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct VarianceCurveArgs {
    /// Input batch; a fresh Hadamard batch of --count images when absent
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub count: usize,
    /// Filter kinds, repeatable
    #[arg(long, value_parser = parse_kind, default_values = ["ss", "nss", "ns"])]
    pub kind: Vec<FilterKind>,
    /// Times to sample, comma separated and strictly ascending
    #[arg(long = "t", value_delimiter = ',', default_values_t = [0u32, 1, 2, 4, 8, 16, 32, 64, 128, 256])]
    pub t_values: Vec<u32>,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// CSV output
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Training data tensor file
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Checkpoint output
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step history CSV (default: <out>.history.csv)
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind, default_value = "nss")]
    pub kind: FilterKind,
    /// Fixed filter time instead of the annealing schedule
    #[arg(long, conflicts_with_all = ["big_t", "beta"])]
    pub t: Option<u32>,
    /// Initial time of the annealing schedule [default: 256]
    #[arg(long = "T")]
    pub big_t: Option<u32>,
    /// Decay power of the annealing schedule [default: 20]
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = nssgan::gan::DEFAULT_BATCH_SIZE)]
    pub batch: usize,
    #[arg(long, default_value_t = nssgan::nn::SYNTHETIC_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub b1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub b2: f64,
    #[arg(long, default_value_t = nssgan::gan::DEFAULT_LATENT_DIM)]
    pub latent_dim: usize,
    /// Filter only the first half of each mini-batch
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub half_batch: Switch,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

impl TrainArgs {
    pub fn history_path(&self) -> PathBuf {
        self.history
            .clone()
            .unwrap_or_else(|| crate::manifest::with_suffix(&self.out, ".history.csv"))
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    /// Checkpoint file
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 4096)]
    pub count: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Batch to evaluate (usually fakes)
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Reference batch; adds std ratios and the coefficient Fréchet distance
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Accepted for uniformity; evaluation is deterministic
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Per-basis statistics CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Summary CSV of metric,value rows (default: <out>.report.csv)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl EvalArgs {
    pub fn report_path(&self) -> PathBuf {
        self.report
            .clone()
            .unwrap_or_else(|| crate::manifest::with_suffix(&self.out, ".report.csv"))
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExportPgmArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Number of leading images to export
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    /// Accepted for uniformity; export is deterministic
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run
    #[arg(long = "in")]
    pub input: PathBuf,
}
