//! `multiqt`: generate synthetic calls, train and evaluate models, stream,
//! benchmark and run the modality-permutation ablation.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "multiqt", version, about = "Multimodal question tracking over audio features and ASR posteriors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-width network.
    Full,
    /// Narrower layers for CPU experiments.
    Desk,
    /// Very small network for smoke tests.
    Tiny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Short calls with dense questions.
    Desk,
    /// Call-center length and sparsity.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Permute {
    None,
    Audio,
    Text,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    #[arg(long, default_value = "both", value_parser = ["audio", "text", "both"])]
    pub modality: String,
    #[arg(long, default_value = "concat", value_parser = ["concat", "tensor"])]
    pub fusion: String,
    /// Add the binary any-question head with this loss weight.
    #[arg(long)]
    pub multitask_beta: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Training config file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Probability of permuting an example's audio during training.
    #[arg(long)]
    pub pa: Option<f64>,
    /// Probability of permuting an example's text during training.
    #[arg(long)]
    pub ps: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Number of folds; the last one is the test fold.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Validation dataset for best-epoch selection.
    #[arg(long)]
    pub val: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long, default_value_t = 250)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "question", value_parser = ["question", "symptom"])]
        task: String,
        #[arg(long, value_enum, default_value = "desk")]
        profile: Profile,
        /// Generator config file (`key = value` lines).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: `data/` inside the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on all folds but the last and evaluate on the last.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate a checkpoint on one fold (or every call).
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Fold to evaluate; all calls when omitted.
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, value_enum, default_value = "none")]
        permute: Permute,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Stream one call through a checkpoint chunk by chunk.
    Stream {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Call id, e.g. call_00004 (default: the first call).
        #[arg(long)]
        call: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        chunk_seconds: f64,
    },
    /// Measure streaming and offline real-time factors.
    Bench {
        /// Checkpoint to benchmark (default: a freshly initialized model of `--preset`).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full")]
        preset: Preset,
        #[arg(long, default_value_t = 166.0)]
        duration: f64,
        #[arg(long, default_value_t = 1.0)]
        chunk_seconds: f64,
        /// Parallel stream counts to measure.
        #[arg(long, value_delimiter = ',', default_value = "1,8")]
        streams: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        offline_repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train with and without modality permutation and test under each permutation.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Extra seeds beyond `--seed`.
        #[arg(long, value_delimiter = ',')]
        more_seeds: Vec<u64>,
    },
    /// Print a call as text.
    Dump {
        /// Dataset directory or a single `.mqtd` file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        call: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            n,
            seed,
            task,
            profile,
            config,
            out,
        } => commands::gen(n, seed, &task, profile, config.as_deref(), out),
        Command::Train { data, model, train } => commands::train(&data, &model, &train),
        Command::Eval {
            model,
            data,
            fold,
            folds,
            permute,
            seed,
        } => commands::eval(&model, &data, fold, folds, permute, seed),
        Command::Stream {
            model,
            data,
            call,
            chunk_seconds,
        } => commands::stream(&model, &data, call.as_deref(), chunk_seconds),
        Command::Bench {
            model,
            preset,
            duration,
            chunk_seconds,
            streams,
            offline_repeats,
            seed,
        } => commands::bench(model.as_deref(), preset, duration, chunk_seconds, &streams, offline_repeats, seed),
        Command::Ablate {
            data,
            model,
            train,
            more_seeds,
        } => commands::ablate(&data, &model, &train, &more_seeds),
        Command::Dump { data, call } => commands::dump(&data, call.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
