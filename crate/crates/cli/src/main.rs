use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "snrgain", version, about = "Train small networks and measure node-level SNR gain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and save it with its accuracy report
    Train(TrainArgs),
    /// Compute per-layer SNR fitness and gain of a saved network
    Analyze(AnalyzeArgs),
    /// Run a grid of training configurations and correlate gain with accuracy
    Sweep(SweepArgs),
    /// Keep only the inputs with the strongest covariance in one layer
    Prune(PruneArgs),
    /// Recompute the summary and scatter files from a records.csv
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Dataset {
    Mnist,
    Cifar10,
    Synthetic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Arch {
    MnistSmall,
    MnistFull,
    CifarSmall,
    CifarFull,
    Toy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Selection {
    Strongest,
    Weakest,
    Random,
}

#[derive(Args, Clone)]
pub struct DataArgs {
    #[arg(long, value_enum)]
    pub dataset: Dataset,
    /// Directory holding `mnist/` or `cifar10/` (or the files themselves)
    #[arg(long, env = "SNRGAIN_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Seed of the train/test split
    #[arg(long, default_value_t = 7)]
    pub split_seed: u64,
    #[arg(long)]
    pub train_samples: Option<usize>,
    #[arg(long)]
    pub test_samples: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Defaults to the reduced network for the dataset
    #[arg(long, value_enum)]
    pub arch: Option<Arch>,
    /// TOML training config; the flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed for weight initialization and training
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Network file; the report goes next to it as `<out>.toml`
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct MetricArgs {
    /// TOML metric config; the flags below override it
    #[arg(long)]
    pub metric_config: Option<PathBuf>,
    /// Inputs whose batch maximum is at or below this are ignored
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub no_scaling: bool,
    #[arg(long)]
    pub no_centering: bool,
    /// Plain instead of activity-weighted layer means
    #[arg(long)]
    pub unweighted: bool,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Weighted layers summed into the aggregate, e.g. `1..2`; defaults to
    /// all but the output layer
    #[arg(long)]
    pub layers: Option<String>,
    /// Number of test samples used
    #[arg(long)]
    pub samples: Option<usize>,
    /// JSON file with per-layer results
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV with one row per node
    #[arg(long)]
    pub nodes_csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Sweep spec in TOML; the built-in MNIST grid when absent
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, env = "SNRGAIN_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Concurrent training runs (0 = one per core)
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args)]
pub struct PruneArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Weighted layer to prune (1-based)
    #[arg(long)]
    pub layer: usize,
    /// Fraction of each node's inputs kept, in (0, 1]
    #[arg(long)]
    pub keep: f64,
    #[arg(long, value_enum, default_value = "strongest")]
    pub selection: Selection,
    /// Seed for random selection
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Training samples used to estimate covariances
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Prune(a) => commands::prune(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(commands::Outcome::Complete) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Partial) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
