use serde::{Deserialize, Serialize};

use super::ModelError;

/// Which sub-networks the model has and how contexts are featurized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Context encoder on fingerprint x activity, mean aggregation, query
    /// encoder, predictor on both encodings.
    Full,
    /// Raw query bits go straight to the predictor.
    NoQueryEncoding,
    /// Context encoder sees fingerprint bits followed by the activity.
    ConcatenatedContext,
    /// Predictor sees only the raw query bits.
    NoContext,
    /// Self-attention over the context encodings before the mean.
    AttentiveAggregation,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoQueryEncoding,
        Variant::ConcatenatedContext,
        Variant::NoContext,
        Variant::AttentiveAggregation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoQueryEncoding => "no_query_encoding",
            Variant::ConcatenatedContext => "concatenated_context",
            Variant::NoContext => "no_context",
            Variant::AttentiveAggregation => "attentive_aggregation",
        }
    }

    pub fn has_context_encoder(self) -> bool {
        self != Variant::NoContext
    }

    pub fn has_query_encoder(self) -> bool {
        !matches!(self, Variant::NoContext | Variant::NoQueryEncoding)
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.replace('-', "_"))
            .ok_or_else(|| ModelError::Config(format!("unknown variant '{s}'")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FsCapConfig {
    pub nbits: usize,
    /// Fingerprint radius the model's inputs were computed with.
    pub radius: usize,
    pub encoding_dim: usize,
    pub n_layers: usize,
    pub mlp_width: usize,
    pub dropout_p: f64,
    pub n_context: usize,
    pub variant: Variant,
    pub attention_layers: usize,
    pub attention_heads: usize,
}

impl Default for FsCapConfig {
    fn default() -> Self {
        FsCapConfig {
            nbits: 2048,
            radius: 3,
            encoding_dim: 512,
            n_layers: 6,
            mlp_width: 2048,
            dropout_p: 0.1,
            n_context: 8,
            variant: Variant::Full,
            attention_layers: 4,
            attention_heads: 4,
        }
    }
}

impl FsCapConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.nbits < 64 || !self.nbits.is_power_of_two() {
            return bad(format!("nbits {} must be a power of two >= 64", self.nbits));
        }
        for (name, v) in [
            ("encoding_dim", self.encoding_dim),
            ("n_layers", self.n_layers),
            ("mlp_width", self.mlp_width),
            ("n_context", self.n_context),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} must lie in [0, 1)", self.dropout_p));
        }
        if self.variant == Variant::AttentiveAggregation {
            if self.attention_layers == 0 || self.attention_heads == 0 {
                return bad("attentive aggregation needs attention layers and heads".into());
            }
            if self.encoding_dim % self.attention_heads != 0 {
                return bad(format!(
                    "encoding_dim {} is not divisible by {} attention heads",
                    self.encoding_dim, self.attention_heads
                ));
            }
        }
        Ok(())
    }

    /// Width of one featurized context row.
    pub fn context_input_width(&self) -> usize {
        match self.variant {
            Variant::ConcatenatedContext => self.nbits + 1,
            _ => self.nbits,
        }
    }

    pub fn predictor_input_width(&self) -> usize {
        match self.variant {
            Variant::NoContext => self.nbits,
            Variant::NoQueryEncoding => self.encoding_dim + self.nbits,
            _ => 2 * self.encoding_dim,
        }
    }

    /// `[input, width, ..., width, output]` with `n_layers` layers.
    pub fn mlp_dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(self.mlp_width, self.n_layers - 1));
        dims.push(output);
        dims
    }

    /// Predictor layers followed by batch norm and dropout: all but the
    /// last two.
    pub fn predictor_normalized_layers(&self) -> usize {
        self.n_layers.saturating_sub(2)
    }

    /// Closed-form trainable parameter count.
    ///
    /// An MLP with widths `d0..dL` has `sum(d_i * d_{i+1} + d_{i+1})`
    /// weights and biases; each batch-normalized predictor layer adds
    /// `2 * mlp_width`; each attention layer adds `4 e^2 + 4 e + 2 e`
    /// for `e = encoding_dim`.
    pub fn parameter_count(&self) -> usize {
        let mlp = |dims: &[usize]| -> usize { dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum() };
        let e = self.encoding_dim;
        let mut total = mlp(&self.mlp_dims(self.predictor_input_width(), 1))
            + 2 * self.mlp_width * self.predictor_normalized_layers();
        if self.variant.has_context_encoder() {
            total += mlp(&self.mlp_dims(self.context_input_width(), e));
        }
        if self.variant.has_query_encoder() {
            total += mlp(&self.mlp_dims(self.nbits, e));
        }
        if self.variant == Variant::AttentiveAggregation {
            total += self.attention_layers * (4 * e * e + 4 * e + 2 * e);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_full_parameter_count() {
        // context encoder 2048-2048x4-512, query encoder the same,
        // predictor 1024-2048x5-1 with four batch-normalized layers.
        let enc = 5 * (2048 * 2048 + 2048) + 2048 * 512 + 512;
        let pred = (1024 * 2048 + 2048) + 4 * (2048 * 2048 + 2048) + 2049 + 4 * 2 * 2048;
        assert_eq!(FsCapConfig::default().parameter_count(), 2 * enc + pred);
        assert_eq!(2 * enc + pred, 62_964_737);
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("no-context".parse::<Variant>().unwrap(), Variant::NoContext);
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn validation() {
        assert!(FsCapConfig::default().validate().is_ok());
        let mut c = FsCapConfig {
            variant: Variant::AttentiveAggregation,
            encoding_dim: 30,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.encoding_dim = 32;
        assert!(c.validate().is_ok());
        c.dropout_p = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let r: Result<FsCapConfig, _> = serde_json::from_str(r#"{"nbits": 64, "wat": 1}"#);
        assert!(r.is_err());
    }
}
