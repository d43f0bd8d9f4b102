//! `interpnet` command-line tool.
//!
//! Exit codes: 0 on success, 1 when a command fails at run time, 2 for usage
//! and configuration errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "interpnet", version, about = "Interpolation-prediction networks for irregularly sampled time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint, or cross-validate its configuration with --kfold.
    Eval(EvalArgs),
    /// Cross-validate every subset of the interpolation outputs.
    Ablate(AblateArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write per-sample predictions of a checkpoint.
    Predict(PredictArgs),
    /// Randomly thin every channel of a dataset.
    Sparsify(SparsifyArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON generator settings; unspecified fields take their defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Label mechanism: intensity, transient, trend or subsample
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub task: Option<String>,
}

/// Model and optimizer settings shared by the training commands. Flags
/// override values read from `--config`.
#[derive(Args, Debug, Default)]
pub struct ModelFlags {
    /// JSON training configuration used as the base
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Interpolation outputs fed to the GRU, e.g. "si,t,i" or "i"
    #[arg(long)]
    pub channels: Option<String>,
    /// Number of reference time points [default: 64]
    #[arg(long)]
    pub refs: Option<usize>,
    /// GRU hidden units [default: 64]
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Weight of the reconstruction loss [default: 1]
    #[arg(long)]
    pub delta_r: Option<f64>,
    /// l2 weight on the interpolation parameters [default: 1e-5]
    #[arg(long)]
    pub delta_i: Option<f64>,
    /// l2 weight on the prediction parameters [default: 1e-5]
    #[arg(long)]
    pub delta_p: Option<f64>,
    /// Fraction of observations held out per batch [default: 0.2]
    #[arg(long)]
    pub mask_frac: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Bandwidth ratio of the transient interpolant [default: 10]
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Bins of the discretizing baselines [default: --refs]
    #[arg(long)]
    pub bins: Option<usize>,
    /// Front end: none (interpolation network), m, f or s
    #[arg(long)]
    pub baseline: Option<String>,
    /// Global gradient-norm clip; 0 disables [default: 100]
    #[arg(long)]
    pub clip: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path
    #[arg(long)]
    pub out: PathBuf,
    /// Expected task; must match the dataset
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Metric report path
    #[arg(long)]
    pub metrics: PathBuf,
    /// Retrain the checkpoint's configuration in k folds instead of scoring it
    #[arg(long)]
    pub kfold: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Dataset; repeat to add a second task on the same cohort
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    /// JSON table path
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub kfold: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Check one head only
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub refs: usize,
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// JSON-Lines output path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SparsifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of each channel's observations to keep
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Sparsify(a) => commands::sparsify(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, interpnet::Error::Config(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
