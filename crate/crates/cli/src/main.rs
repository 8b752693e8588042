//! The `scvae` binary: argument parsing over the command functions in
//! `scvae_cli::commands`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use scvae_cli::commands;

#[derive(Parser)]
#[command(
    name = "scvae",
    version,
    about = "Spatial copula VAE for paired binary outcomes: simulate, train, predict, effects, benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Simulate {
        /// Generator configuration (key=value file).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the model on a dataset CSV and an adjacency file.
    Train {
        /// Training configuration (key=value file).
        #[arg(long)]
        config: PathBuf,
        /// Dataset CSV (`region_id,y1,y2,<features...>`).
        #[arg(long)]
        data: PathBuf,
        /// Region adjacency edge list.
        #[arg(long)]
        adjacency: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior-predictive tables from a fitted checkpoint.
    Predict {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset CSV to predict on.
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Monte Carlo draws per observation.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Seed for the Monte Carlo draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Average covariate effects with bootstrap intervals.
    Ace {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset CSV the effects are averaged over.
        #[arg(long)]
        data: PathBuf,
        /// Covariate specification (key=value file).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Variant-comparison sweep over configuration cells and seeds.
    Benchmark {
        /// Grid configuration (key=value file).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, out } => commands::simulate::run(&config, &out),
        Command::Train {
            config,
            data,
            adjacency,
            out,
        } => commands::train::run(&config, &data, &adjacency, &out),
        Command::Predict {
            checkpoint,
            data,
            out,
            samples,
            seed,
        } => commands::predict::run(&checkpoint, &data, &out, samples, seed),
        Command::Ace {
            checkpoint,
            data,
            config,
            out,
        } => commands::ace::run(&checkpoint, &data, &config, &out),
        Command::Benchmark { config, out } => commands::benchmark::run(&config, &out),
    }
}
