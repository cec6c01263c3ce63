mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lensless::dataio::{Method, Split};
use lensless::Error;

#[derive(Debug, Parser)]
#[command(name = "lensless", version, about = "Simulate, reconstruct, train and evaluate lensless imaging pipelines")]
pub struct Cli {
    /// Experiment configuration (JSON); flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory under which default output directories are created.
    #[arg(long, global = true, env = "LENSLESS_OUTPUT_ROOT", default_value = "lensless-output", value_name = "DIR")]
    pub output_root: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a paired dataset on disk.
    Simulate(SimulateArgs),
    /// Reconstruct one measurement or a dataset split with a classical method.
    Reconstruct(ReconstructArgs),
    /// Train a network and write its checkpoint and history.
    Train(TrainArgs),
    /// Score a checkpoint or a classical method over a split.
    Eval(EvalArgs),
    /// Compare every classical method and a trained network on a split.
    Benchmark(BenchmarkArgs),
    /// Train the full network and its ablation variants and compare them.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory (default: a subdirectory of the output root).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Existing dataset: a synthesized one (with manifest.json) or a directory
    /// of train/val/test paired subdirectories.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Square image extent of synthesized data (also sets the model's).
    #[arg(long)]
    pub extents: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub mask_density: Option<f64>,
    #[arg(long)]
    pub mask_support: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub val_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Wiener regularizer δ.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Fixed step size (default: 1/L from the PSF spectrum).
    #[arg(long)]
    pub step: Option<f64>,
    /// Total-variation weight (ADMM).
    #[arg(long)]
    pub tv: Option<f64>,
    /// ℓ1 weight (FISTA, ADMM).
    #[arg(long)]
    pub l1: Option<f64>,
    /// ADMM penalty ρ.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_name = "BOOL")]
    pub nonneg: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Full,
    NoRecb,
    FixedPsf,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub scales: Option<usize>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long)]
    pub model_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainingArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Optimizer step budget.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_name = "BOOL")]
    pub augment: Option<bool>,
    #[arg(long)]
    pub train_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// Single measurement image (requires --psf).
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// PSF image for --input or for external paired data.
    #[arg(long, value_name = "FILE")]
    pub psf: Option<PathBuf>,
    /// Ground truth for --input; enables metrics.
    #[arg(long, value_name = "FILE")]
    pub reference: Option<PathBuf>,
    /// Split to reconstruct when no --input is given (default: test).
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// PSF image for external paired data.
    #[arg(long, value_name = "FILE")]
    pub psf: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainingArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[arg(long, value_name = "FILE")]
    pub psf: Option<PathBuf>,
    /// Default: test.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Trained network to include; without it one is trained first.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Default: test.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainingArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Default: val.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainingArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status per error category.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 3,
        Error::Parse { .. } => 4,
        Error::Io { .. } => 5,
        Error::Numerical(_) | Error::Divergence { .. } => 7,
        Error::Sizing(_) | Error::Argument(_) | Error::Domain(_) | Error::DegenerateMask(_) => 6,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
