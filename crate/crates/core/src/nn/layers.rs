use rand::Rng;

use super::matrix::{Matrix, Scalar};
use super::{Mode, Module, NnError, Param};

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| T::lit(rng.gen_range(-bound..bound)))
            .collect();
        Linear {
            weight: Param::new(Matrix::from_vec(fan_in, fan_out, w).expect("shape")),
            bias: Param::new(Matrix::zeros(1, fan_out)),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: Param::new(Matrix::zeros(fan_in, fan_out)),
            bias: Param::new(Matrix::zeros(1, fan_out)),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>, NnError> {
        Matrix::affine(x, &self.weight.value, self.bias.value.as_slice())
    }

    /// Accumulate parameter gradients; return the input gradient if asked.
    pub fn backward(&mut self, x: &Matrix<T>, dy: &Matrix<T>, need_dx: bool) -> Option<Matrix<T>> {
        self.weight.grad.accumulate_xt_dy(x, dy);
        dy.accumulate_col_sums(self.bias.grad.as_mut_slice());
        need_dx.then(|| Matrix::matmul_transposed(dy, &self.weight.value))
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![
            ("weight".into(), &mut self.weight),
            ("bias".into(), &mut self.bias),
        ]
    }

    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

/// Per-feature batch normalization over the rows of a batch.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Matrix<T>,
    pub running_var: Matrix<T>,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    normalized: Matrix<T>,
    inv_std: Vec<T>,
    /// Batch mean and unbiased variance, for the running statistics.
    batch_mean: Vec<T>,
    batch_var: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(features: usize) -> Self {
        let mut gamma = Matrix::zeros(1, features);
        gamma.fill(T::one());
        let mut running_var = Matrix::zeros(1, features);
        running_var.fill(T::one());
        BatchNorm {
            gamma: Param::new(gamma),
            beta: Param::new(Matrix::zeros(1, features)),
            running_mean: Matrix::zeros(1, features),
            running_var,
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.value.cols()
    }

    pub fn forward(
        &self,
        x: &Matrix<T>,
        mode: Mode,
    ) -> Result<(Matrix<T>, Option<BatchNormCache<T>>), NnError> {
        let f = self.features();
        if x.cols() != f {
            return Err(NnError::Shape(format!(
                "batch norm over {f} features got {} columns",
                x.cols()
            )));
        }
        let gamma = self.gamma.value.as_slice();
        let beta = self.beta.value.as_slice();
        let eps = T::lit(self.epsilon);
        match mode {
            Mode::Eval => {
                let mean = self.running_mean.as_slice();
                let var = self.running_var.as_slice();
                let mut y = x.clone();
                for r in 0..y.rows() {
                    for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                        *v = gamma[j] * (*v - mean[j]) / (var[j] + eps).sqrt() + beta[j];
                    }
                }
                Ok((y, None))
            }
            Mode::Train => {
                let n = x.rows();
                if n == 0 {
                    return Err(NnError::Shape("batch norm on an empty batch".into()));
                }
                let nf = T::lit(n as f64);
                let mut mean = vec![T::zero(); f];
                x.accumulate_col_sums(&mut mean);
                mean.iter_mut().for_each(|m| *m /= nf);
                let mut var = vec![T::zero(); f];
                for r in 0..n {
                    for (j, &v) in x.row(r).iter().enumerate() {
                        let d = v - mean[j];
                        var[j] += d * d;
                    }
                }
                let biased: Vec<T> = var.iter().map(|&s| s / nf).collect();
                let unbiased: Vec<T> = if n > 1 {
                    var.iter().map(|&s| s / T::lit((n - 1) as f64)).collect()
                } else {
                    biased.clone()
                };
                let inv_std: Vec<T> = biased.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let mut normalized = x.clone();
                for r in 0..n {
                    for (j, v) in normalized.row_mut(r).iter_mut().enumerate() {
                        *v = (*v - mean[j]) * inv_std[j];
                    }
                }
                let mut y = normalized.clone();
                for r in 0..n {
                    for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                        *v = gamma[j] * *v + beta[j];
                    }
                }
                Ok((
                    y,
                    Some(BatchNormCache {
                        normalized,
                        inv_std,
                        batch_mean: mean,
                        batch_var: unbiased,
                    }),
                ))
            }
        }
    }

    pub fn backward(&mut self, cache: &BatchNormCache<T>, dy: &Matrix<T>) -> Matrix<T> {
        let n = dy.rows();
        let f = self.features();
        let nf = T::lit(n as f64);
        let mut sum_dy = vec![T::zero(); f];
        let mut sum_dy_xhat = vec![T::zero(); f];
        for r in 0..n {
            let xh = cache.normalized.row(r);
            for (j, &g) in dy.row(r).iter().enumerate() {
                sum_dy[j] += g;
                sum_dy_xhat[j] += g * xh[j];
            }
        }
        for j in 0..f {
            self.gamma.grad.as_mut_slice()[j] += sum_dy_xhat[j];
            self.beta.grad.as_mut_slice()[j] += sum_dy[j];
        }
        let gamma = self.gamma.value.as_slice();
        let mut dx = Matrix::zeros(n, f);
        for r in 0..n {
            let xh = cache.normalized.row(r);
            let g = dy.row(r);
            for (j, out) in dx.row_mut(r).iter_mut().enumerate() {
                *out = gamma[j] * cache.inv_std[j] / nf
                    * (nf * g[j] - sum_dy[j] - xh[j] * sum_dy_xhat[j]);
            }
        }
        dx
    }

    /// Fold one batch's statistics into the running estimates.
    pub fn update_running_stats(&mut self, cache: &BatchNormCache<T>) {
        let m = T::lit(self.momentum);
        let keep = T::one() - m;
        for (r, &b) in self.running_mean.as_mut_slice().iter_mut().zip(&cache.batch_mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in self.running_var.as_mut_slice().iter_mut().zip(&cache.batch_var) {
            *r = keep * *r + m * b;
        }
    }
}

impl<T: Scalar> Module<T> for BatchNorm<T> {
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![("gamma".into(), &mut self.gamma), ("beta".into(), &mut self.beta)]
    }

    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn buffers(&self) -> Vec<(String, &Matrix<T>)> {
        vec![
            ("running_mean".into(), &self.running_mean),
            ("running_var".into(), &self.running_var),
        ]
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        vec![
            ("running_mean".into(), &mut self.running_mean),
            ("running_var".into(), &mut self.running_var),
        ]
    }
}

pub const LN_EPSILON: f64 = 1e-5;

/// Per-row normalization over features with a learned affine map.
#[derive(Debug, Clone)]
pub struct LayerNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    normalized: Matrix<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(features: usize) -> Self {
        let mut gamma = Matrix::zeros(1, features);
        gamma.fill(T::one());
        LayerNorm {
            gamma: Param::new(gamma),
            beta: Param::new(Matrix::zeros(1, features)),
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> (Matrix<T>, LayerNormCache<T>) {
        let d = x.cols();
        let df = T::lit(d as f64);
        let eps = T::lit(LN_EPSILON);
        let gamma = self.gamma.value.as_slice();
        let beta = self.beta.value.as_slice();
        let mut normalized = x.clone();
        let mut y = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().copied().sum::<T>() / df;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / df;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            let nr = normalized.row_mut(r);
            for v in nr.iter_mut() {
                *v = (*v - mean) * is;
            }
            let nr = normalized.row(r).to_vec();
            for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                *v = gamma[j] * nr[j] + beta[j];
            }
        }
        (y, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache<T>, dy: &Matrix<T>) -> Matrix<T> {
        let d = dy.cols();
        let df = T::lit(d as f64);
        let gamma = self.gamma.value.as_slice().to_vec();
        let mut dx = Matrix::zeros(dy.rows(), d);
        for r in 0..dy.rows() {
            let xh = cache.normalized.row(r);
            let g = dy.row(r);
            for j in 0..d {
                self.gamma.grad.as_mut_slice()[j] += g[j] * xh[j];
                self.beta.grad.as_mut_slice()[j] += g[j];
            }
            let dxh: Vec<T> = (0..d).map(|j| g[j] * gamma[j]).collect();
            let s1: T = dxh.iter().copied().sum();
            let s2: T = dxh.iter().zip(xh).map(|(&a, &b)| a * b).sum();
            let is = cache.inv_std[r];
            for (j, out) in dx.row_mut(r).iter_mut().enumerate() {
                *out = is / df * (df * dxh[j] - s1 - xh[j] * s2);
            }
        }
        dx
    }
}

impl<T: Scalar> Module<T> for LayerNorm<T> {
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![("gamma".into(), &mut self.gamma), ("beta".into(), &mut self.beta)]
    }

    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - p)` during training,
/// evaluation is the identity.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    x: &mut Matrix<T>,
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Option<Vec<bool>> {
    if mode == Mode::Eval || p <= 0.0 {
        return None;
    }
    let scale = T::lit(1.0 / (1.0 - p));
    let mask: Vec<bool> = (0..x.as_slice().len()).map(|_| rng.gen::<f64>() >= p).collect();
    for (v, &keep) in x.as_mut_slice().iter_mut().zip(&mask) {
        *v = if keep { *v * scale } else { T::zero() };
    }
    Some(mask)
}

pub fn dropout_backward<T: Scalar>(dy: &mut Matrix<T>, mask: &[bool], p: f64) {
    let scale = T::lit(1.0 / (1.0 - p));
    for (g, &keep) in dy.as_mut_slice().iter_mut().zip(mask) {
        *g = if keep { *g * scale } else { T::zero() };
    }
}

pub fn relu_in_place<T: Scalar>(x: &mut Matrix<T>) {
    for v in x.as_mut_slice() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zero the gradient wherever the ReLU output was zero.
pub fn relu_backward<T: Scalar>(dy: &mut Matrix<T>, output: &Matrix<T>) {
    for (g, &o) in dy.as_mut_slice().iter_mut().zip(output.as_slice()) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}
