use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::{parse_pair, parse_path_pair};

/// Dual co-attention meme classifier: data checks, training, evaluation
/// and corpus statistics.
#[derive(Debug, Parser)]
#[command(name = "dora", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a manifest and write the clean records plus a reject report.
    Ingest(IngestArgs),
    /// Assign stratified train/valid/test splits.
    Split(SplitArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Score a trained run, or a file of predictions.
    Eval(EvalArgs),
    /// Train and test every ablation variant.
    Ablate(AblateArgs),
    /// Score trained runs across test sets.
    Transfer(TransferArgs),
    /// Class distribution, lexical statistics, word overlap and caption lengths.
    Stats(StatsArgs),
    /// Inter-annotator agreement.
    Kappa(KappaArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Any setting as KEY=VALUE; repeatable.
    #[arg(long = "set", value_parser = parse_pair)]
    pub overrides: Vec<(String, String)>,
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    /// 1 = hateful meme detection, 2 = target identification.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub task: Option<u8>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// madgrad or adam.
    #[arg(long)]
    pub optimizer: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Train, valid and test fractions.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest with train and valid splits assigned.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `train`.
    #[arg(long, requires = "manifest", conflicts_with = "predictions")]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// CSV with `prediction` and `gold` columns holding label codes.
    #[arg(long, required_unless_present = "run")]
    pub predictions: Option<PathBuf>,
    /// Task of the predictions file.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub task: Option<u8>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated variant codes, or `all`.
    #[arg(long, default_value = "all")]
    pub variants: String,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Trained run as NAME=DIR; repeatable, one table row each.
    #[arg(long = "run", value_parser = parse_path_pair, required = true)]
    pub runs: Vec<(String, PathBuf)>,
    /// Test manifest as NAME=PATH; repeatable, one table column each.
    #[arg(long = "test", value_parser = parse_path_pair, required = true)]
    pub tests: Vec<(String, PathBuf)>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Number of most frequent words compared by the overlap table.
    #[arg(long)]
    pub top_n: usize,
    #[arg(long, default_value_t = 5)]
    pub bin_width: usize,
    /// Split for the caption statistics; `all` uses every sample.
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Keep punctuation attached to words.
    #[arg(long)]
    pub keep_punctuation: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// CSV with `id`, `annotator_a`, `annotator_b` and optionally `task` columns.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Comma-separated label set; defaults to labels in order of appearance.
    #[arg(long)]
    pub labels: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Transfer(a) => commands::transfer(a),
        Command::Stats(a) => commands::stats(a),
        Command::Kappa(a) => commands::kappa(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
