//! Command-line surface for the antiviral peptide pipeline.
//!
//! Subcommands: `featurize`, `augment`, `train`, `finetune`, `predict`,
//! `evaluate`, `compose-stats`, `serve`. Exit codes: 0 success, 1
//! validation/usage error, 2 IO or format error.

pub mod commands;
pub mod config;
pub mod service;

use clap::{Args, Parser, Subcommand};
use commands::*;
use config::RunConfig;
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "avpred",
    about = "Antiviral peptide screening: features, augmentation, training, prediction, evaluation",
    disable_help_subcommand = true
)]
struct Cli {
    /// Print the effective configuration (defaults merged with --config)
    /// and exit.
    #[arg(long, global = false)]
    dump_config: bool,

    /// Path to a key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct EmbedderArg {
    /// Embedding source: `fallback:dim=D:seed=N` or `file:PATH`.
    #[arg(long, default_value = "fallback:dim=64:seed=0")]
    embedder: EmbedderSpec,
}

#[derive(Subcommand)]
enum Command {
    /// Compute descriptor vectors for a FASTA file into CSV.
    Featurize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit augmented copies of each sequence as FASTA.
    Augment {
        #[arg(long = "in", required_unless_present = "dump_matrix")]
        input: Option<PathBuf>,
        #[arg(long, required_unless_present = "dump_matrix")]
        out: Option<PathBuf>,
        /// Augmented copies per input sequence.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the embedded substitution table and exit.
        #[arg(long)]
        dump_matrix: bool,
    },
    /// Stage-1 training: checkpoint plus dynamics CSV.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dynamics: Option<PathBuf>,
        #[command(flatten)]
        embedder: EmbedderArg,
    },
    /// Stage-2 transfer fine-tuning from a base checkpoint.
    Finetune {
        #[arg(long)]
        base: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dynamics: Option<PathBuf>,
        #[command(flatten)]
        embedder: EmbedderArg,
    },
    /// Per-sequence probabilities, labels, and gate weights.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional `id,label` table for interpretability exports.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Test-time augmentation variants (0 = plain prediction).
        #[arg(long, default_value_t = 0)]
        tta: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for gate_lambda.csv and attention.csv.
        #[arg(long)]
        interpret_dir: Option<PathBuf>,
        /// CSV of final fused embeddings (one row per sequence).
        #[arg(long)]
        embeddings_out: Option<PathBuf>,
        #[command(flatten)]
        embedder: EmbedderArg,
    },
    /// Metrics JSON (and optional ROC/PR curves) from a prediction CSV.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        curves_dir: Option<PathBuf>,
    },
    /// Per-amino-acid composition statistics between two FASTA groups.
    ComposeStats {
        #[arg(long)]
        group_a: PathBuf,
        #[arg(long)]
        group_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve predictions over HTTP (POST /predict, GET /health).
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        /// Test-time augmentation variants per request (0 = off).
        #[arg(long, default_value_t = 0)]
        tta: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        embedder: EmbedderArg,
    },
}

fn dispatch(cli: Cli) -> avpred::Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(avpred::Error::Config(
            "a subcommand is required (featurize, augment, train, finetune, predict, evaluate, compose-stats, serve)"
                .into(),
        ));
    };
    match command {
        Command::Featurize { input, out } => cmd_featurize(&input, &out, &cfg),
        Command::Augment { input, out, count, seed, dump_matrix } => {
            if dump_matrix {
                print!("{}", dump_substitution_matrix());
                return Ok(());
            }
            let input = input.expect("clap enforces --in");
            let out = out.expect("clap enforces --out");
            cmd_augment(&input, &out, &cfg, count, seed)
        }
        Command::Train { input, labels, checkpoint, dynamics, embedder } => cmd_train(
            &TrainArgs {
                input: &input,
                labels: &labels,
                checkpoint_out: &checkpoint,
                dynamics_out: dynamics.as_deref(),
                embedder: &embedder.embedder,
            },
            &cfg,
        ),
        Command::Finetune { base, input, labels, checkpoint, dynamics, embedder } => cmd_finetune(
            &FinetuneArgs {
                base: &base,
                input: &input,
                labels: &labels,
                checkpoint_out: &checkpoint,
                dynamics_out: dynamics.as_deref(),
                embedder: &embedder.embedder,
            },
            &cfg,
        ),
        Command::Predict {
            checkpoint,
            input,
            out,
            labels,
            tta,
            seed,
            interpret_dir,
            embeddings_out,
            embedder,
        } => cmd_predict(
            &PredictArgs {
                checkpoint: &checkpoint,
                input: &input,
                output: &out,
                embedder: &embedder.embedder,
                labels: labels.as_deref(),
                tta,
                seed,
                interpret_dir: interpret_dir.as_deref(),
                embeddings_out: embeddings_out.as_deref(),
            },
            &cfg,
        ),
        Command::Evaluate { predictions, labels, out, curves_dir } => cmd_evaluate(&EvaluateArgs {
            predictions: &predictions,
            labels: &labels,
            output: &out,
            curves_dir: curves_dir.as_deref(),
        }),
        Command::ComposeStats { group_a, group_b, out } => {
            cmd_compose_stats(&group_a, &group_b, &out, &cfg)
        }
        Command::Serve { checkpoint, port, workers, tta, seed, embedder } => {
            let (params, model, _) =
                avpred::model::checkpoint::load_checkpoint_file(&checkpoint)?;
            let extractor = avpred::train::FeatureExtractor::new_uncached(
                embedder.embedder.provider()?,
                cfg.descriptor.clone(),
            );
            let loaded =
                service::LoadedModel::new(params, model, extractor, &cfg, tta, seed)?;
            service::serve_forever(Arc::new(loaded), port, workers)
        }
    }
}

/// Run the CLI on the given arguments; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with success status.
            if e.use_stderr() {
                eprintln!("{e}");
                return 1;
            }
            print!("{e}");
            return 0;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
