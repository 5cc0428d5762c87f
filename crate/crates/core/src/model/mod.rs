//! The few-shot activity model, its ablation variants, training and the
//! model file format.

mod config;
mod io;
mod network;
mod train;

pub use config::{FsCapConfig, Variant};
pub use io::{load_model, parse_model_file, save_model, ModelFile, TensorRecord, FORMAT_VERSION};
pub use network::{
    featurize_context, featurize_context_concatenated, BatchInputs, Episode, FsCapModel, ModelCache,
};
pub use train::{train_epoch, BatchSource, EpochStats, Trainer};

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("episode has {got} contexts, model expects {expected}")]
    ContextCount { expected: usize, got: usize },
    #[error("empty context set")]
    EmptyContext,
    #[error("fingerprint has {got} bits, model expects {expected}")]
    FingerprintWidth { expected: usize, got: usize },
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("batch source failed: {0}")]
    Source(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model file version {found} is not supported (current version is {expected})")]
    Version { found: u32, expected: u32 },
    #[error("model file stores {found} values, expected {expected}")]
    DType { found: String, expected: String },
    #[error("tensor {name}: {reason}")]
    Tensor { name: String, reason: String },
}
