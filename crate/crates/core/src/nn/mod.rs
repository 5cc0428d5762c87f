//! Dense network core: layers with hand-written backward passes, MSE loss,
//! Adam, the warmup + cosine learning-rate schedule and a finite-difference
//! gradient checker.
//!
//! Forward passes take `&self` and return a cache; backward passes take the
//! cache and accumulate into parameter gradients. A frozen network can thus
//! serve concurrent evaluation while only the training loop mutates it.

mod attention;
mod gradcheck;
mod layers;
mod matrix;
mod mlp;
mod optim;
mod schedule;

pub use attention::{AttentionBlock, AttentionCache, AttentionStack};
pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport};
pub use layers::{
    dropout, dropout_backward, relu_backward, relu_in_place, BatchNorm, BatchNormCache,
    LayerNorm, LayerNormCache, Linear, BN_EPSILON, BN_MOMENTUM,
};
pub use matrix::{axpy, Matrix, Scalar};
pub use mlp::{Mlp, MlpCache};
pub use optim::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use schedule::LrSchedule;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor and its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Matrix<T>) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Param { value, grad }
    }
}

/// Named access to a network's parameters and non-trainable buffers.
/// Order is stable, which the optimizer and the model file rely on.
pub trait Module<T: Scalar> {
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)>;

    fn params(&self) -> Vec<(String, &Param<T>)>;

    fn buffers(&self) -> Vec<(String, &Matrix<T>)> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        Vec::new()
    }

    fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.value.as_slice().len()).sum()
    }
}

/// Prefix every name in a list with `prefix.`.
pub fn prefixed<X>(prefix: &str, items: Vec<(String, X)>) -> Vec<(String, X)> {
    items
        .into_iter()
        .map(|(n, x)| (format!("{prefix}.{n}"), x))
        .collect()
}

/// Mean squared error and its gradient `2 (pred - target) / n`.
pub fn mse_loss<T: Scalar>(
    pred: &Matrix<T>,
    target: &Matrix<T>,
) -> Result<(T, Matrix<T>), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = T::lit(pred.as_slice().len().max(1) as f64);
    let two = T::lit(2.0);
    let mut grad = pred.clone();
    let mut total = T::zero();
    for (g, &t) in grad.as_mut_slice().iter_mut().zip(target.as_slice()) {
        let d = *g - t;
        total += d * d;
        *g = two * d / n;
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix<f64> {
        Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn mse_examples() {
        let (l, g) = mse_loss(&col(&[1.0, 2.0]), &col(&[1.0, 2.0])).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
        let (l, g) = mse_loss(&col(&[0.0]), &col(&[2.0])).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g.as_slice(), &[-4.0]);
        let (l, _) = mse_loss(&col(&[1.0, 3.0]), &col(&[1.0, 1.0])).unwrap();
        assert_eq!(l, 2.0);
        assert!(mse_loss(&col(&[1.0]), &col(&[1.0, 2.0])).is_err());
    }
}
