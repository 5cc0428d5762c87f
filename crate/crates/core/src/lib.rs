//! Few-shot compound activity prediction.
//!
//! A query compound's activity in an assay is predicted from a handful of
//! context compounds measured in the same assay. Context fingerprints are
//! scaled by their activities and encoded, the per-context encodings are
//! averaged into an assay representation, and a predictor maps that
//! representation together with an encoding of the query to an activity.
//!
//! The crate carries the whole pipeline: SMILES parsing ([`smiles`]),
//! circular fingerprints ([`fingerprint`]), a small dense network core with
//! manual backpropagation ([`nn`]), the model and its ablations ([`model`]),
//! ingestion, episode sampling and synthetic assays ([`data`]), and the
//! evaluation protocols ([`eval`]).

pub mod data;
pub mod eval;
pub mod fingerprint;
pub mod model;
pub mod nn;
pub mod smiles;

pub use model::{FsCapConfig, FsCapModel, Variant};
pub use fingerprint::{morgan_fingerprint, tanimoto, tanimoto_baseline_score, Fingerprint};

pub use smiles::{parse_smiles, Molecule};
