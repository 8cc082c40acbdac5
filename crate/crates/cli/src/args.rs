use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dpweights::evaluation::GroupKey;
use dpweights::verify::Mode;
use dpweights::NoiseVariant;

#[derive(Debug, Parser)]
#[command(
    name = "dpweights",
    version,
    about = "Calibrated Gaussian noise for trained model weights"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random draw (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Flat `key = value` file; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Print a machine-readable JSON report on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    /// Suppress the human-readable summary and warnings.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sensitivity, noise scales and the supported epsilon range.
    Calibrate(CalibrateArgs),
    /// Add calibrated noise to a checkpoint.
    Noise(NoiseArgs),
    /// Advanced composition and the Renyi-DP accounting pipeline.
    Account(AccountArgs),
    /// Monte-Carlo privacy-loss sweep over a log-spaced epsilon grid.
    Simulate(SimulateArgs),
    /// Check the density condition, optionally after composition.
    Verify(VerifyArgs),
    /// Threshold membership-inference metrics from score files.
    Mia(MiaArgs),
    /// Descriptive and pairwise statistics over run-result files.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    /// Training epochs E.
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Per-sample gradient clipping norm C.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Training set size N.
    #[arg(long)]
    pub dataset_size: Option<u64>,
    /// Batch size B.
    #[arg(long)]
    pub batch_size: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Defaults to 1/N^2.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Input checkpoint (safetensors layout).
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// split or undersqrt (default split).
    #[arg(long)]
    pub variant: Option<NoiseVariant>,
    /// Write the noise receipt here as JSON.
    #[arg(long, value_name = "PATH")]
    pub receipt: Option<PathBuf>,
    /// Noise anyway when epsilon exceeds max_supported_epsilon.
    #[arg(long)]
    pub allow_unsupported_epsilon: bool,
    /// Leave tensors whose name starts with this prefix untouched (repeatable).
    #[arg(long, value_name = "PREFIX")]
    pub exclude_prefix: Vec<String>,
}

#[derive(Debug, Args)]
pub struct AccountArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Noise scale variant used when --sigma is absent (default split).
    #[arg(long)]
    pub variant: Option<NoiseVariant>,
    /// Use this noise scale instead of calibrating one.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Also report advanced composition over this many queries.
    #[arg(long)]
    pub compositions: Option<u64>,
    /// Largest integer Renyi order in the grid 2..=N (default 256).
    #[arg(long)]
    pub alpha_max: Option<u32>,
    /// Widen sigma to sqrt(sigma^2 + empirical_term(epsilon)^2) before accounting.
    #[arg(long)]
    pub sigma_total: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Fixed delta for every grid point (default 1/N^2).
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eps_min: Option<f64>,
    #[arg(long)]
    pub eps_max: Option<f64>,
    /// Number of log-spaced grid points.
    #[arg(long)]
    pub eps_points: Option<usize>,
    /// Draws per grid point and variant.
    #[arg(long)]
    pub samples: Option<u64>,
    /// split, undersqrt or both (default both).
    #[arg(long)]
    pub variant: Option<SweepVariant>,
    /// Directory receiving report.json and sweep.csv.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Also verify the budget composed this many times.
    #[arg(long)]
    pub compositions: Option<u64>,
    /// taylor or exact (default exact).
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Taylor partial-sum length (default 20).
    #[arg(long)]
    pub terms: Option<u32>,
    /// Check this noise scale instead of the calibrated split one.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Write an SMT-LIB script asserting the negated condition.
    #[arg(long, value_name = "PATH")]
    pub emit_smt: Option<PathBuf>,
    /// Exit with status 1 unless every checked condition is satisfied.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct MiaArgs {
    /// `score` CSV for training members.
    #[arg(long, value_name = "CSV", requires = "nonmembers", conflicts_with = "labeled")]
    pub members: Option<PathBuf>,
    /// `score` CSV for non-members.
    #[arg(long, value_name = "CSV", requires = "members")]
    pub nonmembers: Option<PathBuf>,
    /// Single `label,score` CSV holding both cohorts.
    #[arg(long, value_name = "CSV")]
    pub labeled: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run-result CSV files.
    #[arg(long = "runs", value_name = "CSV", num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// batch_size or epochs (default batch_size).
    #[arg(long)]
    pub group_by: Option<GroupKey>,
    /// Directory receiving descriptive.csv, pairwise.csv and report.json.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

/// Variant selection for a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVariant {
    One(NoiseVariant),
    Both,
}

impl SweepVariant {
    pub fn variants(self) -> Vec<NoiseVariant> {
        match self {
            Self::One(v) => vec![v],
            Self::Both => NoiseVariant::ALL.to_vec(),
        }
    }
}

impl std::str::FromStr for SweepVariant {
    type Err = dpweights::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("both") {
            Ok(Self::Both)
        } else {
            s.parse().map(Self::One)
        }
    }
}
