use rand::Rng;

use super::layers::{dropout, dropout_backward, relu_backward, relu_in_place};
use super::{prefixed, BatchNorm, BatchNormCache, Linear, Matrix, Mode, Module, NnError, Param, Scalar};

#[derive(Debug, Clone)]
struct Block<T> {
    linear: Linear<T>,
    norm: Option<BatchNorm<T>>,
    relu: bool,
    dropout_p: f64,
}

/// Stack of `Linear -> [BatchNorm] -> ReLU -> [Dropout]` blocks. The last
/// block is a bare linear map.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    blocks: Vec<Block<T>>,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    /// Input to every block; `inputs[i + 1]` is block `i`'s output.
    inputs: Vec<Matrix<T>>,
    norms: Vec<Option<BatchNormCache<T>>>,
    masks: Vec<Option<Vec<bool>>>,
}

impl<T: Scalar> Mlp<T> {
    /// `dims` lists the input width followed by every layer's output width.
    /// The first `normalized_layers` blocks get batch norm and dropout.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        normalized_layers: usize,
        dropout_p: f64,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let n = dims.len() - 1;
        let blocks = (0..n)
            .map(|i| {
                let last = i + 1 == n;
                let normed = i < normalized_layers && !last;
                Block {
                    linear: Linear::new(dims[i], dims[i + 1], rng),
                    norm: normed.then(|| BatchNorm::new(dims[i + 1])),
                    relu: !last,
                    dropout_p: if normed { dropout_p } else { 0.0 },
                }
            })
            .collect();
        Mlp { blocks }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Linear<T>> {
        self.blocks.iter().map(|b| &b.linear)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear<T>> {
        self.blocks.iter_mut().map(|b| &mut b.linear)
    }

    pub fn input_width(&self) -> usize {
        self.blocks[0].linear.fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.blocks.last().expect("non-empty").linear.fan_out()
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// Number of leading blocks with batch norm and dropout.
    pub fn normalized_layers(&self) -> usize {
        self.blocks.iter().filter(|b| b.norm.is_some()).count()
    }

    pub fn set_dropout(&mut self, p: f64) {
        for b in self.blocks.iter_mut().filter(|b| b.norm.is_some()) {
            b.dropout_p = p;
        }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: Matrix<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix<T>, MlpCache<T>), NnError> {
        if x.cols() != self.input_width() {
            return Err(NnError::Shape(format!(
                "MLP expects {} input features, got {}",
                self.input_width(),
                x.cols()
            )));
        }
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.blocks.len()),
            norms: Vec::with_capacity(self.blocks.len()),
            masks: Vec::with_capacity(self.blocks.len()),
        };
        let mut h = x;
        for b in &self.blocks {
            let mut y = b.linear.forward(&h)?;
            cache.inputs.push(h);
            let norm_cache = match &b.norm {
                Some(bn) => {
                    let (out, c) = bn.forward(&y, mode)?;
                    y = out;
                    c
                }
                None => None,
            };
            cache.norms.push(norm_cache);
            if b.relu {
                relu_in_place(&mut y);
            }
            cache.masks.push(dropout(&mut y, b.dropout_p, mode, rng));
            h = y;
        }
        Ok((h, cache))
    }

    /// Backpropagate `dy`; returns the input gradient when `need_dx`.
    pub fn backward(
        &mut self,
        cache: &MlpCache<T>,
        dy: Matrix<T>,
        need_dx: bool,
    ) -> Option<Matrix<T>> {
        let n = self.blocks.len();
        let mut g = dy;
        for i in (0..n).rev() {
            let b = &mut self.blocks[i];
            if let Some(mask) = &cache.masks[i] {
                dropout_backward(&mut g, mask, b.dropout_p);
            }
            if b.relu {
                // Post-dropout output is zero wherever the ReLU was inactive.
                let out = cache.inputs.get(i + 1).expect("relu block is not last");
                relu_backward(&mut g, out);
            }
            if let (Some(bn), Some(c)) = (b.norm.as_mut(), cache.norms[i].as_ref()) {
                g = bn.backward(c, &g);
            }
            let want = i > 0 || need_dx;
            match b.linear.backward(&cache.inputs[i], &g, want) {
                Some(dx) => g = dx,
                None => return None,
            }
        }
        Some(g)
    }

    pub fn update_running_stats(&mut self, cache: &MlpCache<T>) {
        for (b, c) in self.blocks.iter_mut().zip(&cache.norms) {
            if let (Some(bn), Some(c)) = (b.norm.as_mut(), c) {
                bn.update_running_stats(c);
            }
        }
    }
}

impl<T: Scalar> Module<T> for Mlp<T> {
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.extend(prefixed(&format!("{i}.linear"), b.linear.params_mut()));
            if let Some(bn) = b.norm.as_mut() {
                out.extend(prefixed(&format!("{i}.norm"), bn.params_mut()));
            }
        }
        out
    }

    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(prefixed(&format!("{i}.linear"), b.linear.params()));
            if let Some(bn) = b.norm.as_ref() {
                out.extend(prefixed(&format!("{i}.norm"), bn.params()));
            }
        }
        out
    }

    fn buffers(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            if let Some(bn) = b.norm.as_ref() {
                out.extend(prefixed(&format!("{i}.norm"), bn.buffers()));
            }
        }
        out
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            if let Some(bn) = b.norm.as_mut() {
                out.extend(prefixed(&format!("{i}.norm"), bn.buffers_mut()));
            }
        }
        out
    }
}
