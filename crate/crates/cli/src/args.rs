use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use polyrnn::cells::CellKind;

#[derive(Debug, Parser)]
#[command(name = "polyrnn", version, about = "Recurrent models with polynomial memory decay")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write the log, checkpoints and gradient profiles.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Per-timestep input-gradient norms and decay fit.
    #[command(args_override_self = true)]
    GradProfile(ProfileArgs),
    /// Closed-form ODE checks, or a single solution/sensitivity query.
    #[command(args_override_self = true)]
    OdeCheck(OdeArgs),
    /// Re-fit a saved gradient profile.
    #[command(args_override_self = true)]
    FitDecay(FitArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    Smnist,
    Psmnist,
    Har,
    Copy,
    Adding,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Smnist => "smnist",
            Task::Psmnist => "psmnist",
            Task::Har => "har",
            Task::Copy => "copy",
            Task::Adding => "adding",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value = "adding")]
    pub task: Task,
    /// Directory with the IDX files (image tasks) or the HAR tree.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Sequence length of the synthetic tasks; must match the data for the others.
    #[arg(long = "T")]
    pub seq_len: Option<usize>,
    /// Image downscaling factor (2 turns 28×28 into 14×14).
    #[arg(long, default_value_t = 1)]
    pub downscale: usize,
    /// Seed of the fixed pixel permutation (psmnist).
    #[arg(long, default_value_t = 0)]
    pub perm_seed: u64,
    /// Seed of data generation and of the train/validation split.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub valid_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value = "leaky", value_parser = parse_cell)]
    pub cell: CellKind,
    /// Decay exponent; 0 keeps the linear decay.
    #[arg(long = "r", default_value_t = 0.0, allow_negative_numbers = true)]
    pub rate_r: f64,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// `α = k/T`.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha_mult: f64,
    /// Weights with fan-in m are drawn with standard deviation init_std/√m.
    #[arg(long, default_value_t = 0.1)]
    pub init_std: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub forget_bias: Option<f64>,
}

fn parse_cell(s: &str) -> Result<CellKind, String> {
    s.parse().map_err(|e: polyrnn::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    /// Comma-separated epochs at which the learning rate halves.
    #[arg(long, default_value = "")]
    pub milestones: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated epochs (0 = before training) with a gradient profile.
    #[arg(long, default_value = "0,1,5,10")]
    pub profile_epochs: String,
    #[arg(long, default_value_t = 32)]
    pub profile_batch: usize,
    /// Keep the leak rate α at its initial value.
    #[arg(long)]
    pub fixed_alpha: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, conflicts_with = "init_only")]
    pub checkpoint: Option<PathBuf>,
    /// Profile freshly initialized models instead of a checkpoint.
    #[arg(long)]
    pub init_only: bool,
    /// Sequences averaged per model.
    #[arg(long, default_value_t = 32)]
    pub count: usize,
    /// Initialization seeds averaged (`seed, seed+1, …`); init-only.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Fit window: a leading fraction, `a..b` (1-based, inclusive) or `full`.
    #[arg(long, default_value = "0.25")]
    pub window: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OdeArgs {
    #[arg(long = "r", allow_negative_numbers = true)]
    pub rate_r: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub h0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub csv: PathBuf,
    #[arg(long, default_value = "0.25")]
    pub window: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Flags that take no value; `key=true` in a config file turns them on.
pub const SWITCHES: [&str; 2] = ["fixed-alpha", "init-only"];
