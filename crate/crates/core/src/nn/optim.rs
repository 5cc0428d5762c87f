use super::{Param, Scalar};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Adam with bias correction. Moment buffers are matched to parameters by
/// position, so the parameter list must keep a stable order across steps.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Default for Adam<T> {
    fn default() -> Self {
        Adam {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

impl<T: Scalar> Adam<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step<'a, I>(&mut self, params: I, lr: f64)
    where
        I: IntoIterator<Item = &'a mut Param<T>>,
    {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let step_size = T::lit(lr / bc1);
        let inv_sqrt_bc2 = T::lit(1.0 / bc2.sqrt());
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let eps = T::lit(self.epsilon);
        for (i, p) in params.into_iter().enumerate() {
            let n = p.value.as_slice().len();
            if self.first.len() <= i {
                self.first.push(vec![T::zero(); n]);
                self.second.push(vec![T::zero(); n]);
            }
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let grad = p.grad.as_slice();
            for (((w, &g), mi), vi) in p
                .value
                .as_mut_slice()
                .iter_mut()
                .zip(grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + c1 * g;
                *vi = b2 * *vi + c2 * g * g;
                *w -= step_size * *mi / (vi.sqrt() * inv_sqrt_bc2 + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn scalar_param(v: f64, g: f64) -> Param<f64> {
        let mut p = Param::new(Matrix::from_vec(1, 1, vec![v]).unwrap());
        p.grad.set(0, 0, g);
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_param(0.7, 0.0);
        let mut adam = Adam::new();
        adam.step([&mut p], 0.1);
        assert_eq!(p.value.get(0, 0), 0.7);
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut p = scalar_param(0.7, 3.0);
        let mut adam = Adam::new();
        adam.step([&mut p], 0.0);
        assert_eq!(p.value.get(0, 0), 0.7);
    }

    #[test]
    fn first_step_is_unit_step_times_lr() {
        let mut p = scalar_param(0.0, 1.0);
        let mut adam = Adam::new();
        adam.step([&mut p], 0.1);
        // m_hat = 1, v_hat = 1, so the update is 0.1 / (1 + 1e-8).
        assert!((p.value.get(0, 0) + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }
}
