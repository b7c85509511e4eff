//! Command-line pipeline around binq-core: train, binarize, compress,
//! sweep, eval, inspect.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{exit_code_for, usage_error};
use config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "binq", version, about = "Train, binarize, and product-quantize small dense networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network per the config (optionally regularized + hardened)
    Train {
        /// Experiment config (TOML)
        #[arg(long, short)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Harden selected layers of a saved dense model to exact +-1
    Binarize {
        #[arg(long, short)]
        config: PathBuf,
        /// Input model file
        #[arg(long)]
        model: PathBuf,
        /// Layers to harden (comma-separated; empty hardens nothing)
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        layers: Vec<usize>,
        /// Output model file
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Product-quantize selected layers of a saved dense model
    Compress {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Layers to quantize (comma-separated)
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        layers: Vec<usize>,
        /// Column segments per layer
        #[arg(long, short)]
        segments: usize,
        /// Centroids per segment codebook
        #[arg(long, short = 'k')]
        clusters: usize,
        /// Store codebooks at one bit per entry (+-1 centroids)
        #[arg(long)]
        binary: bool,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the rate/accuracy grid from the config and emit a CSV report
    Sweep {
        #[arg(long, short)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a saved model (dense or quantized) on a data split
    Eval {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Data split: train or test
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Describe a saved model file
    Inspect {
        #[arg(long)]
        model: PathBuf,
        /// Emit the summary as JSON on stdout
        #[arg(long)]
        json: bool,
    },
}

fn load_config(path: &std::path::Path, overrides: &Overrides) -> anyhow::Result<ExperimentConfig> {
    ExperimentConfig::load(path, overrides).map_err(|e| usage_error(format!("{e:#}")))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            commands::cmd_train(&cfg)
        }
        Command::Binarize {
            config,
            model,
            layers,
            output,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            commands::cmd_binarize(&cfg, &model, &layers, &output)
        }
        Command::Compress {
            config,
            model,
            layers,
            segments,
            clusters,
            binary,
            output,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            commands::cmd_compress(&cfg, &model, &layers, segments, clusters, binary, &output)
        }
        Command::Sweep { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            commands::cmd_sweep(&cfg)
        }
        Command::Eval {
            config,
            model,
            split,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            commands::cmd_eval(&cfg, &model, &split)
        }
        Command::Inspect { model, json } => commands::cmd_inspect(&model, json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message; usage problems exit 1.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}
