//! Assay datasets: TSV ingestion with the activity preprocessing rules,
//! a lossless dump format, assay-level splitting, episode sampling and a
//! synthetic assay generator with known ground truth.

mod dataset;
mod ingest;
mod sample;
mod synthetic;

pub use dataset::{load_dataset, save_dataset, Compound, Dataset, Provenance, DATASET_FORMAT_VERSION};
pub use ingest::{ingest_tsv, ingest_tsv_str, IngestOptions};
pub use sample::{
    eligible_assays, sample_contexts, sample_episode, Constraint, EpisodeSampler, WEAK_THRESHOLD,
};
pub use synthetic::{generate_synthetic, random_molecule_smiles, AssayTruth, SyntheticSpec, SyntheticTruth};

use thiserror::Error;

/// Lowest stored activity, log10 nM.
pub const ACTIVITY_MIN: f64 = -2.5;
/// Highest stored activity, log10 nM.
pub const ACTIVITY_MAX: f64 = 6.5;
pub const MIN_HEAVY_ATOMS: usize = 10;
pub const MAX_HEAVY_ATOMS: usize = 70;
pub const MIN_ASSAY_SIZE: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("input has no header line")]
    NoHeader,
    #[error("header is missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("unknown assay {0:?}")]
    UnknownAssay(String),
    #[error("assay {assay:?}: {eligible} eligible contexts, {needed} needed")]
    InsufficientContexts {
        assay: String,
        eligible: usize,
        needed: usize,
    },
    #[error("cannot hold out {n_test} of {n_assays} assays")]
    BadSplit { n_test: usize, n_assays: usize },
    #[error("no assays available for sampling")]
    NoAssays,
    #[error("corrupt dataset file: {0}")]
    Corrupt(String),
    #[error("dataset file version {found} is not supported (current version is {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}
