//! `dsos`: train small classifiers under mixed label noise, or audit
//! someone else's predictions for it.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, diverged training),
//! 2 usage failure (bad flags, bad config, malformed input files).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::TrainOverrides;

#[derive(Parser)]
#[command(
    name = "dsos",
    version,
    about = "A desk-scale lab for classifier training under mixed in- and out-of-distribution label noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a corrupted train set and a clean test set
    Gen {
        /// Experiment config (JSON) with a gen block
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to output_dir from the config)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the generator seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train with warm-up, per-epoch noise assessment, and label correction
    Train {
        /// Experiment config (JSON) with a train section
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to output_dir from the config)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the training (and generator) seed
        #[arg(long)]
        seed: Option<u64>,
        /// Run warm-up style for every epoch: no assessment, no correction
        #[arg(long)]
        disable_correction: bool,
        /// Keep corrected labels un-softened and entropy weights at 1
        #[arg(long)]
        disable_softening: bool,
        /// Never replace labels with network predictions
        #[arg(long)]
        disable_bootstrap: bool,
        /// Force mixup on or off for warm-up epochs
        #[arg(long, value_name = "BOOL")]
        warmup_mixup: Option<bool>,
    },
    /// Assess an external prediction matrix for label noise
    Audit {
        /// Prediction CSV: header id,p0,...,p{C-1}; rows sum to 1
        #[arg(long)]
        predictions: PathBuf,
        /// Dataset CSV the predictions refer to (by id)
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for audit.json
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Mixture fit iterations
        #[arg(long, default_value_t = 10)]
        bmm_iters: usize,
    },
    /// Re-render the curves CSV from an existing report file
    Report {
        /// A report.json produced by `train`
        #[arg(long)]
        report: PathBuf,
        /// Output directory for curves.csv
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> dsos::Result<()> {
    match cli.command {
        Command::Gen { config, out, seed } => commands::cmd_gen(&config, out.as_deref(), seed),
        Command::Train {
            config,
            out,
            seed,
            disable_correction,
            disable_softening,
            disable_bootstrap,
            warmup_mixup,
        } => {
            let overrides = TrainOverrides {
                seed,
                disable_correction,
                disable_softening,
                disable_bootstrap,
                warmup_mixup,
            };
            commands::cmd_train(&config, out.as_deref(), &overrides)
        }
        Command::Audit {
            predictions,
            dataset,
            out,
            bmm_iters,
        } => commands::cmd_audit(&predictions, &dataset, &out, bmm_iters),
        Command::Report { report, out } => commands::cmd_report(&report, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
