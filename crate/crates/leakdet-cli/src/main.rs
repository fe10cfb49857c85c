//! `leakdet` — batch command-line front end for the acoustic leak-detection
//! pipeline: synthetic data generation, hyperparameter tuning, final model
//! training, transfer evaluation, per-window prediction, and plot-data
//! emission.
//!
//! Every command is deterministic given its config and seed, writes files
//! atomically (temp-then-rename), exits 0 on success, and prints exactly
//! one `error: ...` line to stderr otherwise. Values resolve as
//! flag > config file > built-in default; the global flags can also come
//! from `LEAKDET_*` environment variables.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::RunConfig;
use leakdet::Result;

#[derive(Parser)]
#[command(
    name = "leakdet",
    version,
    about = "Acoustic pipe-leak detection pipeline",
    after_help = "Global flags also read LEAKDET_CONFIG, LEAKDET_SEED, \
                  LEAKDET_WORKERS and LEAKDET_OUT environment variables \
                  (flags win over both the environment and the config file)."
)]
struct Cli {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true, env = "LEAKDET_CONFIG")]
    config: Option<PathBuf>,

    /// Seed for synthetic data generation (default 42)
    #[arg(long, global = true, env = "LEAKDET_SEED")]
    seed: Option<u64>,

    /// Worker threads for the tuning grid; other commands run
    /// single-threaded (default: all cores)
    #[arg(long, global = true, env = "LEAKDET_WORKERS")]
    workers: Option<usize>,

    /// Output directory for emitted files (default ".")
    #[arg(long, global = true, env = "LEAKDET_OUT")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recording (spectrogram + leak annotation)
    Synth {
        /// Preset recording: leak_process, leak_noprocess, noleak_noprocess
        #[arg(long)]
        preset: Option<String>,
    },
    /// Grid-search hyperparameters and band pairs; writes ledger.csv,
    /// band_combos.csv, params.txt and model.svm
    Tune {
        /// Spectrogram file
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Leak interval annotation file
        #[arg(long)]
        annotation: Option<PathBuf>,
    },
    /// Train the final model on a whole recording with tuned parameters
    Train {
        /// Spectrogram file
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Leak interval annotation file
        #[arg(long)]
        annotation: Option<PathBuf>,
        /// Tuned parameters file (as written by tune)
        #[arg(long)]
        params: Option<PathBuf>,
        /// Where to write the model (default <out>/model.svm)
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Evaluate a trained model on a recording; prints a metrics report
    Eval {
        /// Model file
        #[arg(long)]
        model: Option<PathBuf>,
        /// Spectrogram file
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Leak annotation; omit for unannotated recordings (positive-class
        /// metrics then report N/A)
        #[arg(long)]
        annotation: Option<PathBuf>,
    },
    /// Emit per-window decisions and decision-function values
    Predict {
        /// Model file
        #[arg(long)]
        model: Option<PathBuf>,
        /// Spectrogram file
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Where to write the table (default <out>/predictions.csv)
        #[arg(long)]
        predictions_out: Option<PathBuf>,
    },
    /// Re-emit a tuning ledger as plot-ready precision/recall series
    Report {
        /// Ledger file (as written by tune)
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(config::DEFAULT_SEED);
    let out_dir = cli
        .out
        .or_else(|| config.paths.as_ref().and_then(|p| p.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));

    // The tuning grid owns the worker pool; every other command runs
    // single-threaded.
    let threads = match &cli.command {
        Command::Tune { .. } => cli.workers.or(config.workers).unwrap_or(0), // 0 = all cores
        _ => 1,
    };
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();

    match cli.command {
        Command::Synth { preset } => {
            commands::cmd_synth(&config, preset.as_deref(), seed, &out_dir)
        }
        Command::Tune {
            dataset,
            annotation,
        } => commands::cmd_tune(&config, dataset, annotation, &out_dir),
        Command::Train {
            dataset,
            annotation,
            params,
            model_out,
        } => commands::cmd_train(&config, dataset, annotation, params, model_out, &out_dir),
        Command::Eval {
            model,
            dataset,
            annotation,
        } => commands::cmd_eval(&config, model, dataset, annotation),
        Command::Predict {
            model,
            dataset,
            predictions_out,
        } => commands::cmd_predict(&config, model, dataset, predictions_out, &out_dir),
        Command::Report { ledger } => commands::cmd_report(&config, ledger, &out_dir),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        // Single-line, machine-parsable error contract.
        let message: String = e
            .to_string()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        eprintln!("error: {message}");
        std::process::exit(1);
    }
}
