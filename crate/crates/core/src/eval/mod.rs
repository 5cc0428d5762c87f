//! Evaluation: per-assay Pearson correlation, ROC-AUC and top-k%
//! enrichment for screening, a logistic-regression probe over context
//! encodings, and the protocols that drive a scorer over a dataset.

mod metrics;
mod probe;
mod protocol;

pub use metrics::{enrichment, mean_per_group_r, pearson_r, roc_auc, CorrelationReport, GroupCorrelation, ScoredSet};
pub use probe::{logistic_probe, ProbeInstance, ProbeOptions, ProbeResult};
pub use protocol::{
    export_encodings, load_screen_contexts, load_screen_labels, pearson_episodes, run_pearson,
    run_screen, ScreenAssay, ScreenGroup, ScreenReport, Scorer, TanimotoScorer,
};

use thiserror::Error;

use crate::data::DataError;
use crate::fingerprint::FingerprintError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("correlation undefined: constant input")]
    ConstantInput,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("no group had a defined correlation ({skipped} skipped)")]
    NoValidGroups { skipped: usize },
    #[error("ROC-AUC needs both classes")]
    SingleClass,
    #[error("no actives")]
    NoActives,
    #[error("k must lie in (0, 100], got {0}")]
    BadK(f64),
    #[error("degenerate classes: {0}")]
    DegenerateClasses(String),
    #[error("{0}")]
    Protocol(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
}
