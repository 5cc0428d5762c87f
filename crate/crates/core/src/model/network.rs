use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FsCapConfig, ModelError, Variant};
use crate::fingerprint::Fingerprint;
use crate::nn::{
    prefixed, AttentionCache, AttentionStack, Matrix, Mlp, MlpCache, Mode, Module, Param, Scalar,
};

/// One query with its context set and ground-truth activity (log10 nM).
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub assay_id: String,
    pub query: Fingerprint,
    pub contexts: Vec<(Fingerprint, f64)>,
    pub target: f64,
}

/// Fingerprint scaled by activity: `activity` at every set bit, 0 elsewhere.
pub fn featurize_context(fp: &Fingerprint, activity: f64) -> Vec<f64> {
    let mut v = vec![0.0; fp.nbits()];
    fp.write_dense(&mut v, 0.0, activity);
    v
}

/// Fingerprint bits as 0/1 followed by the activity (width `nbits + 1`).
pub fn featurize_context_concatenated(fp: &Fingerprint, activity: f64) -> Vec<f64> {
    let mut v = vec![0.0; fp.nbits() + 1];
    fp.write_dense(&mut v[..fp.nbits()], 0.0, 1.0);
    v[fp.nbits()] = activity;
    v
}

/// Dense network inputs for a batch of episodes sharing one context count.
#[derive(Debug, Clone)]
pub struct BatchInputs<T> {
    /// `batch * group` featurized context rows; absent for `no_context`.
    pub contexts: Option<Matrix<T>>,
    /// Query bits as 0/1, one row per episode.
    pub queries: Matrix<T>,
    pub targets: Matrix<T>,
    pub group: usize,
}

impl<T: Scalar> BatchInputs<T> {
    pub fn len(&self) -> usize {
        self.targets.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct FsCapModel<T = f32> {
    config: FsCapConfig,
    context_encoder: Option<Mlp<T>>,
    attention: Option<AttentionStack<T>>,
    query_encoder: Option<Mlp<T>>,
    predictor: Mlp<T>,
}

#[derive(Debug, Clone)]
pub struct ModelCache<T> {
    context: Option<MlpCache<T>>,
    attention: Option<AttentionCache<T>>,
    query: Option<MlpCache<T>>,
    predictor: MlpCache<T>,
    group: usize,
}

impl<T: Scalar> FsCapModel<T> {
    /// Freshly initialized model; initialization is deterministic in `seed`.
    pub fn new(config: FsCapConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = config.encoding_dim;
        let context_encoder = config
            .variant
            .has_context_encoder()
            .then(|| Mlp::new(&config.mlp_dims(config.context_input_width(), e), 0, 0.0, &mut rng));
        let attention = match config.variant {
            Variant::AttentiveAggregation => Some(AttentionStack::new(
                e,
                config.attention_layers,
                config.attention_heads,
                &mut rng,
            )?),
            _ => None,
        };
        let query_encoder = config
            .variant
            .has_query_encoder()
            .then(|| Mlp::new(&config.mlp_dims(config.nbits, e), 0, 0.0, &mut rng));
        let predictor = Mlp::new(
            &config.mlp_dims(config.predictor_input_width(), 1),
            config.predictor_normalized_layers(),
            config.dropout_p,
            &mut rng,
        );
        Ok(FsCapModel {
            config,
            context_encoder,
            attention,
            query_encoder,
            predictor,
        })
    }

    pub fn config(&self) -> &FsCapConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Override the predictor's dropout probability (gradient checks use 0).
    pub fn set_dropout(&mut self, p: f64) {
        self.config.dropout_p = p;
        self.predictor.set_dropout(p);
    }

    pub fn context_encoder(&self) -> Option<&Mlp<T>> {
        self.context_encoder.as_ref()
    }

    pub fn predictor_mut(&mut self) -> &mut Mlp<T> {
        &mut self.predictor
    }

    fn check_width(&self, fp: &Fingerprint) -> Result<(), ModelError> {
        if fp.nbits() != self.config.nbits {
            return Err(ModelError::FingerprintWidth {
                expected: self.config.nbits,
                got: fp.nbits(),
            });
        }
        Ok(())
    }

    fn context_rows<'a, I>(&self, contexts: I, rows: usize) -> Result<Matrix<T>, ModelError>
    where
        I: IntoIterator<Item = &'a (Fingerprint, f64)>,
    {
        let width = self.config.context_input_width();
        let nbits = self.config.nbits;
        let concat = self.config.variant == Variant::ConcatenatedContext;
        let mut m = Matrix::zeros(rows, width);
        for (r, (fp, activity)) in contexts.into_iter().enumerate() {
            self.check_width(fp)?;
            let row = m.row_mut(r);
            let a = T::lit(*activity);
            if concat {
                for i in fp.ones() {
                    row[i] = T::one();
                }
                row[nbits] = a;
            } else {
                for i in fp.ones() {
                    row[i] = a;
                }
            }
        }
        Ok(m)
    }

    /// Featurize a batch. Every episode must carry `n_context` contexts.
    pub fn inputs(&self, episodes: &[Episode]) -> Result<BatchInputs<T>, ModelError> {
        let n = self.config.n_context;
        for ep in episodes {
            if ep.contexts.len() != n {
                return Err(ModelError::ContextCount {
                    expected: n,
                    got: ep.contexts.len(),
                });
            }
        }
        self.inputs_with_group(episodes, n)
    }

    fn inputs_with_group(&self, episodes: &[Episode], group: usize) -> Result<BatchInputs<T>, ModelError> {
        let b = episodes.len();
        let contexts = if self.config.variant.has_context_encoder() {
            // Canonical order makes the pooled encoding bit-identical under
            // any permutation of an episode's contexts, not just equal up to
            // rounding.
            let ordered = episodes.iter().flat_map(|e| {
                let mut cs: Vec<&(Fingerprint, f64)> = e.contexts.iter().collect();
                cs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
                cs
            });
            Some(self.context_rows(ordered, b * group)?)
        } else {
            None
        };
        let mut queries = Matrix::zeros(b, self.config.nbits);
        let mut targets = Matrix::zeros(b, 1);
        for (r, ep) in episodes.iter().enumerate() {
            self.check_width(&ep.query)?;
            let row = queries.row_mut(r);
            for i in ep.query.ones() {
                row[i] = T::one();
            }
            targets.set(r, 0, T::lit(ep.target));
        }
        Ok(BatchInputs {
            contexts,
            queries,
            targets,
            group,
        })
    }

    /// Per-group mean of context encodings, after optional attention.
    fn aggregate(
        &self,
        contexts: Matrix<T>,
        group: usize,
        rng: &mut (impl Rng + ?Sized),
    ) -> Result<(Matrix<T>, MlpCache<T>, Option<AttentionCache<T>>), ModelError> {
        let encoder = self.context_encoder.as_ref().expect("variant has a context encoder");
        let (mut encoded, enc_cache) = encoder.forward(contexts, Mode::Eval, rng)?;
        let mut att_cache = None;
        if let Some(att) = &self.attention {
            let (out, c) = att.forward(encoded, group)?;
            encoded = out;
            att_cache = Some(c);
        }
        let batch = encoded.rows() / group;
        let e = encoded.cols();
        let mut mean = Matrix::zeros(batch, e);
        let inv = T::one() / T::lit(group as f64);
        for b in 0..batch {
            let out = mean.row_mut(b);
            for i in 0..group {
                for (o, &v) in out.iter_mut().zip(encoded.row(b * group + i)) {
                    *o += v;
                }
            }
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        Ok((mean, enc_cache, att_cache))
    }

    /// Forward pass. Returns one prediction per episode and the cache
    /// needed by [`FsCapModel::backward`].
    pub fn forward<R: Rng + ?Sized>(
        &self,
        inputs: &BatchInputs<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix<T>, ModelCache<T>), ModelError> {
        let group = inputs.group;
        let (x_c, context, attention) = match &inputs.contexts {
            Some(ctx) => {
                let (m, c, a) = self.aggregate(ctx.clone(), group, rng)?;
                (Some(m), Some(c), a)
            }
            None => (None, None, None),
        };
        let (x_q, query) = match &self.query_encoder {
            Some(enc) => {
                let (x, c) = enc.forward(inputs.queries.clone(), Mode::Eval, rng)?;
                (x, Some(c))
            }
            None => (inputs.queries.clone(), None),
        };
        let joined = match x_c {
            Some(x_c) => Matrix::hconcat(&x_c, &x_q)?,
            None => x_q,
        };
        let (pred, predictor) = self.predictor.forward(joined, mode, rng)?;
        Ok((
            pred,
            ModelCache {
                context,
                attention,
                query,
                predictor,
                group,
            },
        ))
    }

    /// Backpropagate the prediction gradient into all parameter gradients.
    pub fn backward(&mut self, cache: &ModelCache<T>, d_pred: Matrix<T>) {
        let d_joined = self
            .predictor
            .backward(&cache.predictor, d_pred, true)
            .expect("input gradient requested");
        let Some(ctx_cache) = &cache.context else {
            return;
        };
        let e = self.config.encoding_dim;
        let (d_xc, d_xq) = d_joined.hsplit(e);
        if let (Some(enc), Some(qc)) = (self.query_encoder.as_mut(), cache.query.as_ref()) {
            enc.backward(qc, d_xq, false);
        }
        let group = cache.group;
        let inv = T::one() / T::lit(group as f64);
        let mut d_enc = Matrix::zeros(d_xc.rows() * group, e);
        for b in 0..d_xc.rows() {
            let g: Vec<T> = d_xc.row(b).iter().map(|&v| v * inv).collect();
            for i in 0..group {
                d_enc.row_mut(b * group + i).copy_from_slice(&g);
            }
        }
        if let (Some(att), Some(ac)) = (self.attention.as_mut(), cache.attention.as_ref()) {
            d_enc = att.backward(ac, d_enc);
        }
        self.context_encoder
            .as_mut()
            .expect("cache has a context pass")
            .backward(ctx_cache, d_enc, false);
    }

    /// Fold a training batch's normalization statistics into the running
    /// estimates.
    pub fn update_running_stats(&mut self, cache: &ModelCache<T>) {
        self.predictor.update_running_stats(&cache.predictor);
    }

    /// Evaluation-mode predictions, processed in chunks.
    pub fn predict(&self, episodes: &[Episode]) -> Result<Vec<f64>, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = Vec::with_capacity(episodes.len());
        for chunk in episodes.chunks(256) {
            let inputs = self.inputs(chunk)?;
            let (pred, _) = self.forward(&inputs, Mode::Eval, &mut rng)?;
            out.extend(pred.as_slice().iter().map(|v| v.as_f64()));
        }
        Ok(out)
    }

    /// Prediction for one episode in the given mode.
    pub fn predict_episode<R: Rng + ?Sized>(
        &self,
        episode: &Episode,
        mode: Mode,
        rng: &mut R,
    ) -> Result<f64, ModelError> {
        let inputs = self.inputs(std::slice::from_ref(episode))?;
        let (pred, _) = self.forward(&inputs, mode, rng)?;
        Ok(pred.get(0, 0).as_f64())
    }

    /// The context-set encoding `x_c` (mean of encoded contexts, after
    /// attention for the attentive variant). Any non-zero number of
    /// contexts is accepted.
    pub fn encode_context_set(&self, contexts: &[(Fingerprint, f64)]) -> Result<Vec<f64>, ModelError> {
        if contexts.is_empty() {
            return Err(ModelError::EmptyContext);
        }
        if !self.config.variant.has_context_encoder() {
            return Err(ModelError::Config("no_context models have no context encoder".into()));
        }
        let rows = self.context_rows(contexts.iter(), contexts.len())?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mean, _, _) = self.aggregate(rows, contexts.len(), &mut rng)?;
        Ok(mean.row(0).iter().map(|v| v.as_f64()).collect())
    }
}

impl<T: Scalar> Module<T> for FsCapModel<T> {
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        if let Some(m) = self.context_encoder.as_mut() {
            out.extend(prefixed("context_encoder", m.params_mut()));
        }
        if let Some(m) = self.attention.as_mut() {
            out.extend(prefixed("attention", m.params_mut()));
        }
        if let Some(m) = self.query_encoder.as_mut() {
            out.extend(prefixed("query_encoder", m.params_mut()));
        }
        out.extend(prefixed("predictor", self.predictor.params_mut()));
        out
    }

    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        if let Some(m) = self.context_encoder.as_ref() {
            out.extend(prefixed("context_encoder", m.params()));
        }
        if let Some(m) = self.attention.as_ref() {
            out.extend(prefixed("attention", m.params()));
        }
        if let Some(m) = self.query_encoder.as_ref() {
            out.extend(prefixed("query_encoder", m.params()));
        }
        out.extend(prefixed("predictor", self.predictor.params()));
        out
    }

    fn buffers(&self) -> Vec<(String, &Matrix<T>)> {
        prefixed("predictor", self.predictor.buffers())
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        prefixed("predictor", self.predictor.buffers_mut())
    }
}
