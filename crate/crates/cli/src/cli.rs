//! Command-line surface. Flags are optional at the clap layer so a
//! defaults file can stand in for any of them.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "trifact",
    version,
    about = "Sparse 3-way tensor factorization for temporal link-weight prediction",
    after_help = "Exit codes: 0 success, 1 usage or configuration error, \
                  2 data error, 3 training divergence."
)]
pub struct Cli {
    /// Defaults file of `key = value` lines; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Convert a timestamped weighted edge list into a normalized tensor
    Ingest(IngestArgs),
    /// Generate a synthetic tensor from a random ground-truth model
    Synth(SynthArgs),
    /// Train a model on a tensor file and save the best-validation state
    Train(TrainArgs),
    /// Evaluate a saved model on one split of a tensor
    Eval(EvalArgs),
    /// Paired momentum-vs-plain runs with a convergence comparison report
    Compare(CompareArgs),
    /// Check the analytic gradient against central finite differences
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// Edge list file: source, target, weight, timestamp per line
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of time bins
    #[arg(long)]
    pub k_slots: Option<usize>,
    /// Field separator: a single character or "tab"
    #[arg(long)]
    pub delimiter: Option<String>,
    /// How colliding (source, target, bin) observations merge: mean or last-wins
    #[arg(long)]
    pub duplicate_policy: Option<String>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tensor dimensions as I,J,K
    #[arg(long)]
    pub dims: Option<String>,
    /// Rank of the generating model
    #[arg(long)]
    pub true_rank: Option<usize>,
    /// Number of observed cells to sample
    #[arg(long)]
    pub entries: Option<usize>,
    /// Gaussian noise standard deviation added to each value
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Tensor file produced by ingest or synth
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of latent factors per entity
    #[arg(long)]
    pub rank: Option<usize>,
    /// Step size
    #[arg(long)]
    pub eta: Option<f64>,
    /// Tikhonov regularization strength
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Momentum constant in [0, 1); 0 disables momentum
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Epoch cap
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without validation improvement before stopping
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train/validation/test ratios, e.g. 0.7,0.1,0.2
    #[arg(long)]
    pub split: Option<String>,
    /// Penalty gradient form: exact or raw-y
    #[arg(long)]
    pub reg_mode: Option<String>,
    /// Half-width of the uniform parameter initialization
    #[arg(long)]
    pub init_scale: Option<f64>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Saved model file
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Tensor file the model was trained on
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Which split to score: train, validation or test
    #[arg(long)]
    pub on: Option<String>,
    /// Seed that produced the split
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train/validation/test ratios, e.g. 0.7,0.1,0.2
    #[arg(long)]
    pub split: Option<String>,
    /// Optional output directory for eval.csv
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Tensor file produced by ingest or synth
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of paired runs; pair seeds count up from --seed
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Momentum constant of the momentum arm (the other arm runs at 0)
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Base seed of the first pair
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub reg_mode: Option<String>,
    #[arg(long)]
    pub init_scale: Option<f64>,
}

#[derive(Args)]
pub struct GradCheckArgs {
    /// Number of random cases
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fix the regularization strength instead of sweeping a mix
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Penalty gradient form under test: exact or raw-y
    #[arg(long)]
    pub reg_mode: Option<String>,
    /// Harness self-test: "sign-flip" negates the analytic gradient and
    /// must make the check fail
    #[arg(long)]
    pub mutation: Option<String>,
    /// Optional output directory for the report
    #[arg(long)]
    pub out: Option<PathBuf>,
}
