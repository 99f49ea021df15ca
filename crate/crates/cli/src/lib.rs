//! Command-line front end for rankforge.
//!
//! Every subcommand writes its outputs plus a `manifest.json` into `--out`.
//! Passing that manifest back with `--manifest` re-runs the command with the
//! same resolved configuration and inputs.

mod commands;
pub mod config;
pub mod datadir;
pub mod manifest;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

pub use manifest::{sha256_file, FileDigest, RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "rankforge",
    version,
    about = "Learning-to-rank toolkit for marketplace search"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Re-run from a manifest written by an earlier run.
    #[arg(long, global = true, conflicts_with = "config")]
    pub manifest: Option<PathBuf>,
    /// Output directory (default: `out/<subcommand>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a marketplace and write its search logs.
    Generate(GenerateArgs),
    /// Feature statistics, transform recommendations and spike checks.
    AnalyzeFeatures(AnalyzeArgs),
    /// Train a ranking model.
    Train(TrainArgs),
    /// Test-split NDCG of a saved model.
    Evaluate(EvaluateArgs),
    /// Permutation importance (and optional ablation).
    Importance(ImportanceArgs),
    /// Compare feature distributions of top and bottom ranked results.
    Topbot(TopbotArgs),
    /// Batch-score a record file with a saved model.
    Score(ScoreArgs),
    /// Run the HTTP scoring endpoint.
    Serve(ServeArgs),
    /// Compare binary and CSV record ingestion throughput.
    BenchIo(BenchIoArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub searches: Option<usize>,
    #[arg(long)]
    pub listings: Option<usize>,
    /// Fraction of listings whose price is logged monthly instead of nightly.
    #[arg(long)]
    pub corrupt_fraction: Option<f64>,
    /// Few listings, no supply cap: many bookings per listing.
    #[arg(long)]
    pub inflated: bool,
    /// Also write records.csv.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by `generate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// pointwise_l2, lambdarank or multitask.
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Add a trainable listing-id embedding of this width.
    #[arg(long)]
    pub listing_id_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated feature names (default: all).
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Shuffle within each query instead of globally.
    #[arg(long)]
    pub within_query: bool,
    /// Also retrain without each feature.
    #[arg(long)]
    pub ablation: bool,
}

#[derive(Debug, Args)]
pub struct TopbotArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Binary record file to score.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Also time `score_batch` this many times.
    #[arg(long)]
    pub latency_iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct BenchIoArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub impressions: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

/// Runs one parsed command and returns its manifest (already written).
pub fn run(cli: Cli) -> Result<RunManifest> {
    match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::AnalyzeFeatures(a) => commands::analyze_features(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Importance(a) => commands::importance(a),
        Command::Topbot(a) => commands::topbot(a),
        Command::Score(a) => commands::score(a),
        Command::Serve(a) => commands::serve(a),
        Command::BenchIo(a) => commands::bench_io(a),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<RunManifest>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}
