use rand::Rng;

use super::{Episode, FsCapModel, ModelError};
use crate::nn::{mse_loss, Adam, LrSchedule, Mode, Module, Scalar};

/// Supplies training batches of episodes.
pub trait BatchSource {
    fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<Episode>, ModelError>;
}

impl BatchSource for Vec<Vec<Episode>> {
    /// Cycles through the stored batches in order.
    fn next_batch<R: Rng + ?Sized>(&mut self, _rng: &mut R) -> Result<Vec<Episode>, ModelError> {
        if self.is_empty() {
            return Err(ModelError::Source("no batches".into()));
        }
        let batch = self.remove(0);
        self.push(batch.clone());
        Ok(batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub last_loss: f64,
    pub steps: u64,
    pub last_lr: f64,
}

/// Adam with a warmup/cosine schedule, stepping once per batch.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    adam: Adam<T>,
    schedule: LrSchedule,
    step: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(schedule: LrSchedule) -> Self {
        Trainer {
            adam: Adam::new(),
            schedule,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn schedule(&self) -> &LrSchedule {
        &self.schedule
    }

    /// One optimization step on a batch; returns the batch loss before the
    /// update.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        model: &mut FsCapModel<T>,
        batch: &[Episode],
        rng: &mut R,
    ) -> Result<f64, ModelError> {
        let lr = self.schedule.lr_at(self.step)?;
        let inputs = model.inputs(batch)?;
        let (pred, cache) = model.forward(&inputs, Mode::Train, rng)?;
        let (loss, grad) = mse_loss(&pred, &inputs.targets)?;
        let loss = loss.as_f64();
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                step: self.step,
                loss,
            });
        }
        model.zero_grad();
        model.backward(&cache, grad);
        model.update_running_stats(&cache);
        self.adam
            .step(model.params_mut().into_iter().map(|(_, p)| p), lr);
        self.step += 1;
        Ok(loss)
    }

    pub fn current_lr(&self) -> f64 {
        self.schedule.lr_at(self.step.min(self.schedule.total_steps)).unwrap_or(0.0)
    }
}

/// Run `steps` training steps drawing batches from `source`.
pub fn train_epoch<T, S, R>(
    model: &mut FsCapModel<T>,
    trainer: &mut Trainer<T>,
    source: &mut S,
    steps: u64,
    rng: &mut R,
) -> Result<EpochStats, ModelError>
where
    T: Scalar,
    S: BatchSource,
    R: Rng + ?Sized,
{
    let mut total = 0.0;
    let mut last_loss = f64::NAN;
    let mut last_lr = 0.0;
    for _ in 0..steps {
        let batch = source.next_batch(rng)?;
        last_lr = trainer.schedule.lr_at(trainer.step)?;
        last_loss = trainer.train_step(model, &batch, rng)?;
        total += last_loss;
    }
    Ok(EpochStats {
        mean_loss: if steps == 0 { f64::NAN } else { total / steps as f64 },
        last_loss,
        steps,
        last_lr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::Fingerprint;
    use crate::model::{FsCapConfig, Variant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(variant: Variant) -> FsCapConfig {
        FsCapConfig {
            nbits: 64,
            radius: 2,
            encoding_dim: 16,
            n_layers: 3,
            mlp_width: 32,
            dropout_p: 0.0,
            n_context: 3,
            variant,
            attention_layers: 1,
            attention_heads: 2,
        }
    }

    fn batch(seed: u64, n: usize) -> Vec<Episode> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fp = |rng: &mut ChaCha8Rng| {
            let idx: Vec<usize> = (0..10).map(|_| rng.gen_range(0..64)).collect();
            Fingerprint::from_indices(64, &idx).unwrap()
        };
        (0..n)
            .map(|_| Episode {
                assay_id: "a".into(),
                query: fp(&mut rng),
                contexts: (0..3).map(|_| (fp(&mut rng), rng.gen_range(0.0..4.0))).collect(),
                target: rng.gen_range(0.0..4.0),
            })
            .collect()
    }

    fn snapshot(m: &FsCapModel<f32>) -> Vec<f32> {
        m.params()
            .iter()
            .flat_map(|(_, p)| p.value.as_slice().to_vec())
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut m = FsCapModel::<f32>::new(config(Variant::Full), 1).unwrap();
        let before = snapshot(&m);
        let mut t = Trainer::new(LrSchedule::frozen(10));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        t.train_step(&mut m, &batch(3, 8), &mut rng).unwrap();
        assert_eq!(before, snapshot(&m));
    }

    #[test]
    fn overfits_one_batch() {
        for v in [Variant::Full, Variant::AttentiveAggregation] {
            let mut m = FsCapModel::<f32>::new(config(v), 1).unwrap();
            let data = batch(4, 16);
            let mut t = Trainer::new(LrSchedule::new(3e-3, 10, 600).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut source = vec![data.clone()];
            train_epoch(&mut m, &mut t, &mut source, 600, &mut rng).unwrap();
            let pred = m.predict(&data).unwrap();
            let mse = pred
                .iter()
                .zip(&data)
                .map(|(p, e)| (p - e.target).powi(2))
                .sum::<f64>()
                / data.len() as f64;
            assert!(mse < 1e-2, "{v}: {mse}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut m = FsCapModel::<f32>::new(
                FsCapConfig {
                    dropout_p: 0.2,
                    ..config(Variant::Full)
                },
                7,
            )
            .unwrap();
            let mut t = Trainer::new(LrSchedule::new(1e-3, 2, 20).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let mut source = vec![batch(1, 8), batch(2, 8)];
            train_epoch(&mut m, &mut t, &mut source, 20, &mut rng).unwrap();
            snapshot(&m)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nan_target_is_reported() {
        let mut m = FsCapModel::<f32>::new(config(Variant::Full), 1).unwrap();
        let mut data = batch(3, 4);
        data[0].target = f64::NAN;
        let mut t = Trainer::new(LrSchedule::new(1e-3, 1, 10).unwrap());
        let err = t
            .train_step(&mut m, &data, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap_err();
        assert!(matches!(err, ModelError::NonFiniteLoss { step: 0, .. }));
    }
}
