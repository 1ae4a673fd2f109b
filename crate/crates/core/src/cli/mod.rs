//! The `prefalign` command line: one subcommand per pipeline stage.
//!
//! Every stage reads a TOML [`RunConfig`](config::RunConfig) (`--config`,
//! `--set key=value` overrides), writes its artifacts under `paths.root`, and
//! leaves a `<artifact>.manifest.json` next to each output. Downstream stages
//! refuse inputs whose manifest does not match the file or the current config.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::eval::EvalError;
use crate::metrics::MetricError;
use crate::prefbuild::PrefBuildError;
use crate::toymt::ModelError;
use crate::train::{ObjectiveKind, TrainError};

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Build(#[from] PrefBuildError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Parser)]
#[command(
    name = "prefalign",
    version,
    about = "Preference-data alignment pipeline for a toy translation model"
)]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.beta=0.5` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads for decoding and scoring; 1 is bitwise deterministic.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Root seed (same as `--set seed=N`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Regime {
    Multi,
    MultiAblate,
    FixedChosen,
    MonoOffset,
    Grid,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Multi => "multi",
            Regime::MultiAblate => "multi-ablate",
            Regime::FixedChosen => "fixed-chosen",
            Regime::MonoOffset => "mono-offset",
            Regime::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    Sft,
    Cpo,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Sft => "sft",
            Objective::Cpo => "cpo",
        }
    }

    fn kind(self) -> ObjectiveKind {
        match self {
            Objective::Sft => ObjectiveKind::Sft,
            Objective::Cpo => ObjectiveKind::Cpo,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic train, test and pretraining corpora.
    GenCorpus,
    /// Train the base model with SFT on the pretraining corpus.
    Pretrain,
    /// Base greedy output, K top-p samples, the reference and external outputs per training segment.
    GenCandidates,
    /// Score every candidate with the alignment metric.
    Score,
    /// Build preference pairs from scored candidates.
    BuildPrefs {
        #[arg(value_enum)]
        regime: Regime,
    },
    /// Search mono-system offsets matching target chosen/rejected averages.
    Calibrate {
        #[arg(long)]
        target_chosen: Option<f64>,
        #[arg(long)]
        target_rejected: Option<f64>,
    },
    /// Fine-tune the base model.
    Train {
        #[arg(value_enum)]
        objective: Objective,
    },
    /// Score a model's greedy output (or a hypotheses file) on the test corpus.
    Evaluate {
        /// Report name; defaults to `model`, `base` or `hyps`.
        #[arg(long)]
        system: Option<String>,
        /// Checkpoint to evaluate instead of `paths.model`.
        #[arg(long, conflicts_with_all = ["hypotheses", "base"])]
        model: Option<PathBuf>,
        /// JSONL of {"segment_id", "text"} records.
        #[arg(long, conflicts_with = "base")]
        hypotheses: Option<PathBuf>,
        /// Evaluate the base model.
        #[arg(long)]
        base: bool,
    },
    /// Compare two evaluation reports (b against a) with paired t-tests.
    Compare { a: String, b: String },
    /// Train one CPO model per quality-grid dataset and score each.
    GridExperiment,
    /// Summarize all evaluation reports in one table.
    Report,
}

/// Runs a parsed command line; returns the text to print.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let mut overrides = cli.set.clone();
    if let Some(w) = cli.workers {
        overrides.push(format!("workers={w}"));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::GenCorpus => commands::gen_corpus(&cfg),
        Command::Pretrain => commands::pretrain(&cfg),
        Command::GenCandidates => commands::gen_candidates(&cfg),
        Command::Score => commands::score(&cfg),
        Command::BuildPrefs { regime } => commands::build_prefs(&cfg, regime),
        Command::Calibrate {
            target_chosen,
            target_rejected,
        } => commands::calibrate(&cfg, target_chosen, target_rejected),
        Command::Train { objective } => commands::train_cmd(&cfg, objective),
        Command::Evaluate {
            system,
            model,
            hypotheses,
            base,
        } => commands::evaluate(
            &cfg,
            commands::EvaluateArgs {
                system,
                model,
                hypotheses,
                base,
            },
        ),
        Command::Compare { a, b } => commands::compare(&cfg, &a, &b),
        Command::GridExperiment => commands::grid_experiment(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

/// Entry point used by the binary: exit 0 on success, 2 on usage errors, 1 otherwise.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{msg}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
