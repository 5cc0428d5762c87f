//! `fscap` command-line tool.
//!
//! Exit codes: 0 success, 2 input error, 3 empty result, 4 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Empty(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Empty(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "fscap", version, about = "Few-shot compound activity prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and fingerprint an activity TSV into a dataset file.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset with known ground truth.
    Synthesize(SynthesizeArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a model or the Tanimoto baseline.
    Eval(EvalArgs),
    /// Classify assays from context encodings with a logistic probe.
    Probe(ProbeArgs),
    /// Predict query activities from a context set.
    Predict(PredictArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Write the per-rule drop counts here (TSV) instead of stderr.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = fscap::fingerprint::DEFAULT_NBITS)]
    pub nbits: usize,
    #[arg(long, default_value_t = fscap::fingerprint::DEFAULT_RADIUS)]
    pub radius: usize,
}

#[derive(Args)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub output: PathBuf,
    /// JSON file with generator parameters; flags override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Also write the hidden per-assay ground truth (JSON).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub n_assays: Option<usize>,
    #[arg(long)]
    pub molecules_per_assay: Option<usize>,
    #[arg(long)]
    pub weight_sparsity: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub n_families: Option<usize>,
    /// Size of the shared compound library; 0 gives every assay its own
    /// molecules.
    #[arg(long)]
    pub library_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nbits: Option<usize>,
    #[arg(long)]
    pub radius: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub n_context: Option<usize>,
    /// `none` or `weak-only`.
    #[arg(long)]
    pub constraint: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub total_episodes: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub base_lr: Option<f64>,
    #[arg(long)]
    pub warmup_steps: Option<u64>,
    #[arg(long)]
    pub n_test_assays: Option<usize>,
    /// Training log (TSV); defaults to the model path with `.log.tsv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Write the effective configuration here before training.
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Model file; omit and pass `--baseline tanimoto` for the baseline.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub baseline: Option<String>,
    /// Dataset file (pearson) or labelled TSV with an `active` column (screen).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "pearson")]
    pub protocol: String,
    /// Context TSV for the screen protocol.
    #[arg(long)]
    pub contexts: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub k: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub episodes_per_query: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub constraint: Option<String>,
    /// Context count for the baseline; models use their own.
    #[arg(long)]
    pub n_context: Option<usize>,
    /// Evaluate every assay rather than the model's held-out ones.
    #[arg(long)]
    pub all_assays: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 15)]
    pub trials: usize,
    #[arg(long)]
    pub n_context: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Permute class labels before fitting (chance-level control).
    #[arg(long)]
    pub shuffle_labels: bool,
    /// Also write the sampled encodings (TSV).
    #[arg(long)]
    pub export: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// TSV with `smiles` and `activity_log10_nm`.
    #[arg(long)]
    pub contexts: PathBuf,
    /// One SMILES per line.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Synthesize(a) => commands::synthesize(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Probe(a) => commands::probe(a),
        Command::Predict(a) => commands::predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
