mod commands;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use setup::Assignment;

/// Seasonal forecasting by phase decomposition.
#[derive(Parser, Debug)]
#[command(name = "mssd", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. Each one overrides the matching key
/// of the configuration file.
#[derive(Args, Debug, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set model.sdnet.tcn_layers=4`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, value_parser = setup::parse_assignment)]
    pub assignments: Vec<Assignment>,
    /// Input CSV (data.path).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Samples per hour (data.samples_per_hour).
    #[arg(long = "i", value_name = "N", global = true)]
    pub samples_per_hour: Option<usize>,
    #[arg(long, global = true)]
    pub delimiter: Option<char>,
    /// The CSV has no header row.
    #[arg(long, global = true)]
    pub no_header: bool,
    /// Zero-based timestamp column; negative for none.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub timestamp_column: Option<i64>,
    /// Gap policy: reject or ffill.
    #[arg(long, global = true)]
    pub fill: Option<String>,
    /// Variable to use for single-series commands (default: the first).
    #[arg(long, global = true)]
    pub variable: Option<String>,
    #[arg(long, global = true)]
    pub input_len: Option<usize>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (output_dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for per-variable training.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the rising, peak and falling components as CSV plus a chart.
    Decompose,
    /// Fit one model per variable and save a checkpoint.
    Train {
        /// Checkpoint path (default: <out>/model.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Forecast the horizon after the end of the data.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Forecast CSV (default: <out>/forecast.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train and score one model per horizon.
    Evaluate {
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        /// Also score the seasonal-naive and global linear baselines.
        #[arg(long)]
        baselines: bool,
    },
    /// Retrain under increasing training-noise ratios.
    Robustness {
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long)]
        sigma_scale: Option<f64>,
    },
    /// Time the convolutional branch against a self-attention reference.
    Bench {
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        #[arg(long, default_value_t = 16)]
        channels: usize,
        /// Minimum time spent per length, in milliseconds.
        #[arg(long, default_value_t = 200)]
        min_time_ms: u64,
    },
    /// Train and score one model per input length.
    SweepInput {
        #[arg(long, value_delimiter = ',')]
        input_lens: Option<Vec<usize>>,
    },
    /// Compare the default model with an architectural variant.
    Ablate {
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        /// Component to switch off.
        #[arg(long, value_enum, default_value_t = commands::Ablation::CausalConv)]
        without: commands::Ablation,
    },
    /// Generate a synthetic seasonal dataset.
    Synth {
        #[arg(long, default_value_t = 200)]
        days: usize,
        /// CSV path (default: <out>/synth.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
