use std::path::Path;

use fscap::data::Constraint;
use fscap::model::{FsCapConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a training run depends on, as one flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub nbits: usize,
    pub radius: usize,
    pub encoding_dim: usize,
    pub n_layers: usize,
    pub mlp_width: usize,
    pub dropout_p: f64,
    pub n_context: usize,
    pub variant: Variant,
    pub attention_layers: usize,
    pub attention_heads: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_steps: u64,
    /// Training length in query episodes seen.
    pub total_episodes: u64,
    pub steps_per_epoch: u64,
    pub n_test_assays: usize,
    pub seed: u64,
    pub constraint: Constraint,
    pub dataset: Option<String>,
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = FsCapConfig::default();
        RunConfig {
            nbits: m.nbits,
            radius: m.radius,
            encoding_dim: m.encoding_dim,
            n_layers: m.n_layers,
            mlp_width: m.mlp_width,
            dropout_p: m.dropout_p,
            n_context: m.n_context,
            variant: m.variant,
            attention_layers: m.attention_layers,
            attention_heads: m.attention_heads,
            batch_size: 1024,
            base_lr: 5e-5,
            warmup_steps: 128,
            total_episodes: 1 << 20,
            steps_per_epoch: 100,
            n_test_assays: 0,
            seed: 0,
            constraint: Constraint::None,
            dataset: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn model_config(&self) -> FsCapConfig {
        FsCapConfig {
            nbits: self.nbits,
            radius: self.radius,
            encoding_dim: self.encoding_dim,
            n_layers: self.n_layers,
            mlp_width: self.mlp_width,
            dropout_p: self.dropout_p,
            n_context: self.n_context,
            variant: self.variant,
            attention_layers: self.attention_layers,
            attention_heads: self.attention_heads,
        }
    }

    /// Optimizer steps: episodes divided by batch size, rounded up.
    pub fn total_steps(&self) -> u64 {
        self.total_episodes.div_ceil(self.batch_size.max(1) as u64)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model_config()
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))?;
        let bad = |m: String| Err(CliError::Input(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr {} must be a non-negative number", self.base_lr));
        }
        if self.total_steps() <= self.warmup_steps {
            return bad(format!(
                "total_episodes {} gives {} steps at batch size {}, not more than warmup_steps {}",
                self.total_episodes,
                self.total_steps(),
                self.batch_size,
                self.warmup_steps
            ));
        }
        if self.steps_per_epoch == 0 {
            return bad("steps_per_epoch must be positive".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
