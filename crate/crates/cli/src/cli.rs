use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "chaoscast", version, about = "Pretrain on chaotic dynamics, forecast markets zero-shot")]
pub struct Cli {
    /// JSON file with `seed`, `workers`, `preset`, `generate`, `model`, `train` and `grid` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random choice of the command (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default 1). Results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Directory for all artifacts of the command.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample sequences, attractor point clouds and autocorrelation tables per interval.
    Generate(GenerateArgs),
    /// Pretrain a model on the synthetic stream.
    Train(TrainArgs),
    /// IC curves, threshold crossings and the horizon scaling fit; optionally score a checkpoint.
    Eval(EvalArgs),
    /// Aggregate trades (or a synthetic market) into bars per timeframe.
    Ingest(IngestArgs),
    /// Run the long/short strategy over the (timeframe × horizon) grid.
    Backtest(BacktestArgs),
    /// Render SVG charts and a markdown table from the CSV artifacts of a directory.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Ingest(_) => "ingest",
            Command::Backtest(_) => "backtest",
            Command::Report(_) => "report",
        }
    }
}

/// Parse a count written as an integer or in scientific notation (`1e6`).
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64 {
        Ok(f as u64)
    } else {
        Err(format!("`{s}` is not a non-negative whole number"))
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Resampling intervals, comma separated (default: the config file's `generate.interval`).
    #[arg(long, value_delimiter = ',')]
    pub interval: Vec<u32>,
    /// Training sequences to export per interval.
    #[arg(long, default_value_t = 2)]
    pub sequences: usize,
    /// Points per exported sequence (default 512).
    #[arg(long)]
    pub context_len: Option<usize>,
    /// Integration step (default 0.01).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Integration steps discarded before sampling (default 1000).
    #[arg(long)]
    pub warmup_steps: Option<u64>,
    /// Points in the diagnostic trajectory per interval.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Largest lag in the autocorrelation tables.
    #[arg(long, default_value_t = 20)]
    pub max_lag: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model size: 0.1M, 1M or 10M.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub interval: Option<u32>,
    #[arg(long, value_parser = parse_count)]
    pub total_samples: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long)]
    pub eval_sequences: Option<usize>,
    /// Continue from this checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Record elapsed seconds in the metrics (makes them differ between reruns).
    #[arg(long)]
    pub wallclock: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Training metrics per horizon, as `HORIZON=PATH` (repeatable).
    #[arg(long = "log", value_name = "HORIZON=PATH")]
    pub logs: Vec<String>,
    /// IC level that counts as reached.
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    /// Points in the trailing moving average of IC.
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    /// Score this checkpoint on fresh held-out sequences.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Resampling interval of the held-out sequences for `--checkpoint`.
    #[arg(long, default_value_t = 100)]
    pub interval: u32,
    #[arg(long, default_value_t = 64)]
    pub eval_sequences: usize,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Trade CSV with header `timestamp_ms,price,size,side`.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub trades: Option<PathBuf>,
    /// Instead of trades, emit this many bars of a noisy resampled Lorenz market.
    #[arg(long, value_parser = parse_count)]
    pub synthetic: Option<u64>,
    /// Noise standard deviation relative to the signal, for `--synthetic`.
    #[arg(long, default_value_t = 0.5)]
    pub noise_ratio: f64,
    /// Resampling interval of the synthetic market.
    #[arg(long, default_value_t = 100)]
    pub synthetic_interval: u32,
    /// Timeframes in seconds, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = chaoscast::market::DEFAULT_TIMEFRAMES)]
    pub timeframes: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Directory holding `bars_<T>s.csv` files from `ingest` (default: --out-dir).
    #[arg(long)]
    pub bars_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = chaoscast::market::DEFAULT_TIMEFRAMES)]
    pub timeframes: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [100u32, 300, 500, 700, 1000])]
    pub horizons: Vec<u32>,
    /// Pretrained model per horizon, as `HORIZON=DIR` (repeatable).
    #[arg(long = "checkpoint", value_name = "HORIZON=DIR")]
    pub checkpoints: Vec<String>,
    #[arg(long)]
    pub calibration_bars: Option<usize>,
    /// Lorenz sequences used for the reference moments of each horizon.
    #[arg(long, default_value_t = 64)]
    pub reference_sequences: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory to scan (default: --out-dir).
    #[arg(long)]
    pub from: Option<PathBuf>,
}
