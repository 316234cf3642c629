//! `walnet`: synthesize corpora, inject label noise, train and evaluate.
//!
//! Exit status is 0 on success, 1 when a command fails and 2 for usage
//! errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "walnet", version, about = "Weak-label audio event detection experiments")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

/// Where a manifest's companions live. Unset paths default to `vocab.txt`,
/// `recipe.json` and `<stem>_truth.csv` next to the manifest, if present.
#[derive(Debug, Clone, Args)]
pub struct ManifestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub recipe: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PoolingArg {
    Avg,
    Max,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Map,
    Mauc,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with known event times.
    Synth {
        #[arg(long)]
        events: Option<usize>,
        #[arg(long)]
        clips: Option<usize>,
        /// Clip length in seconds.
        #[arg(long)]
        len: Option<f64>,
        /// Event level range relative to the background, e.g. `-5,5`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        snr_db: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write each clip as a 16-bit WAV under `out/audio/`.
        #[arg(long)]
        write_wav: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compute and cache logmel features.
    Featurize {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long)]
        feature_cache: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train on one manifest, selecting the epoch by validation score.
    Train {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, value_enum)]
        pooling: Option<PoolingArg>,
        #[arg(long, value_enum)]
        selection_metric: Option<MetricArg>,
        #[arg(long)]
        feature_cache: Option<PathBuf>,
        /// Threads for feature extraction.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Per-event AP/AUC and their means.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: ManifestArgs,
        /// Metrics CSV; a keyed-text summary is written beside it (`.txt`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        feature_cache: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Widen every clip span to a target length.
    Expand {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long)]
        target_len: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Write per-label density (LD, LDN) of the expanded corpus.
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Flip r% of each event's labels, or replay a saved plan.
    Corrupt {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the plan (when generating one).
        #[arg(long, conflicts_with = "apply")]
        plan: Option<PathBuf>,
        /// Replay this plan instead of drawing a new one.
        #[arg(long)]
        apply: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Relabel a corpus as if by per-event retrieval.
    Wild {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long)]
        precision: Option<f64>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Event intervals from thresholded segment posteriors.
    Localize {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        feature_cache: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finite-difference checks of every operator and of the network loss.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seeds per operator.
        #[arg(long, default_value_t = 3)]
        repeats: u64,
        /// Also probe this many coordinates per tensor of the full-width network.
        #[arg(long)]
        full_width: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
