//! `exvo <command> <config.toml>`

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "exvo", version, about = "Vocal-burst multi-task pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus (manifest + WAV files).
    Synth { config: PathBuf },
    /// Train a CNN embedder on a corpus.
    TrainEmbedder { config: PathBuf },
    /// Write frame-level embeddings of a corpus.
    Extract { config: PathBuf },
    /// Mean+std pool a frame-level embedding file.
    Pool { config: PathBuf },
    /// Train a multi-task model on utterance-level features.
    TrainMtl { config: PathBuf },
    /// Predict and score one split.
    Evaluate { config: PathBuf },
    /// Concatenate utterance-level embedding files.
    FuseEarly { config: PathBuf },
    /// Combine per-task predictions of several systems.
    FuseHybrid { config: PathBuf },
    /// Write the first-layer frequency response of an embedder.
    FilterPlot { config: PathBuf },
    /// Run the full pipeline over all seeds.
    Run { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth { config } => commands::synth(config),
        Command::TrainEmbedder { config } => commands::train_embedder(config),
        Command::Extract { config } => commands::extract(config),
        Command::Pool { config } => commands::pool(config),
        Command::TrainMtl { config } => commands::train_mtl_cmd(config),
        Command::Evaluate { config } => commands::evaluate(config),
        Command::FuseEarly { config } => commands::fuse_early(config),
        Command::FuseHybrid { config } => commands::fuse_hybrid(config),
        Command::FilterPlot { config } => commands::filter_plot(config),
        Command::Run { config } => commands::run(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
