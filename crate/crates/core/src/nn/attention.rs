use rand::Rng;

use super::{prefixed, LayerNorm, LayerNormCache, Linear, Matrix, Module, NnError, Param, Scalar};

/// Pre-norm multi-head self-attention with a residual connection:
/// `y = x + W_o · MHA(LayerNorm(x))`.
///
/// Rows are partitioned into consecutive groups of equal size and
/// attention never crosses a group boundary, so one call processes the
/// context sets of a whole batch of episodes.
#[derive(Debug, Clone)]
pub struct AttentionBlock<T> {
    pub norm: LayerNorm<T>,
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
    heads: usize,
}

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    norm: LayerNormCache<T>,
    normed: Matrix<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    /// Softmax weights, one `group x group` table per (group, head).
    probs: Vec<Vec<T>>,
    attended: Matrix<T>,
}

impl<T: Scalar> AttentionBlock<T> {
    pub fn new<R: Rng + ?Sized>(dim: usize, heads: usize, rng: &mut R) -> Result<Self, NnError> {
        if heads == 0 || dim % heads != 0 {
            return Err(NnError::Shape(format!(
                "dimension {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(AttentionBlock {
            norm: LayerNorm::new(dim),
            query: Linear::new(dim, dim, rng),
            key: Linear::new(dim, dim, rng),
            value: Linear::new(dim, dim, rng),
            output: Linear::new(dim, dim, rng),
            heads,
        })
    }

    fn dim(&self) -> usize {
        self.query.fan_in()
    }

    pub fn forward(&self, x: &Matrix<T>, group: usize) -> Result<(Matrix<T>, BlockCache<T>), NnError> {
        let d = self.dim();
        if x.cols() != d {
            return Err(NnError::Shape(format!("attention over {d} features got {}", x.cols())));
        }
        if group == 0 || x.rows() % group != 0 {
            return Err(NnError::Shape(format!(
                "{} rows do not split into groups of {group}",
                x.rows()
            )));
        }
        let (normed, norm) = self.norm.forward(x);
        let q = self.query.forward(&normed)?;
        let k = self.key.forward(&normed)?;
        let v = self.value.forward(&normed)?;
        let dh = d / self.heads;
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let mut attended = Matrix::zeros(x.rows(), d);
        let mut probs = Vec::with_capacity(x.rows() / group * self.heads);
        for g0 in (0..x.rows()).step_by(group) {
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let mut p = vec![T::zero(); group * group];
                for i in 0..group {
                    let qi = &q.row(g0 + i)[cols.clone()];
                    let row = &mut p[i * group..(i + 1) * group];
                    for (j, s) in row.iter_mut().enumerate() {
                        let kj = &k.row(g0 + j)[cols.clone()];
                        *s = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
                    }
                    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let mut total = T::zero();
                    for s in row.iter_mut() {
                        *s = (*s - max).exp();
                        total += *s;
                    }
                    for s in row.iter_mut() {
                        *s /= total;
                    }
                    let out = &mut attended.row_mut(g0 + i)[cols.clone()];
                    for (j, &w) in row.iter().enumerate() {
                        let vj = &v.row(g0 + j)[cols.clone()];
                        for (o, &val) in out.iter_mut().zip(vj) {
                            *o += w * val;
                        }
                    }
                }
                probs.push(p);
            }
        }
        let mut y = self.output.forward(&attended)?;
        y.add_assign(x);
        Ok((
            y,
            BlockCache {
                norm,
                normed,
                q,
                k,
                v,
                probs,
                attended,
            },
        ))
    }

    pub fn backward(&mut self, cache: &BlockCache<T>, dy: &Matrix<T>, group: usize) -> Matrix<T> {
        let d = self.dim();
        let dh = d / self.heads;
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let d_att = self
            .output
            .backward(&cache.attended, dy, true)
            .expect("input gradient requested");
        let rows = dy.rows();
        let mut dq = Matrix::zeros(rows, d);
        let mut dk = Matrix::zeros(rows, d);
        let mut dv = Matrix::zeros(rows, d);
        let mut dp = vec![T::zero(); group * group];
        for (gi, g0) in (0..rows).step_by(group).enumerate() {
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let p = &cache.probs[gi * self.heads + h];
                for i in 0..group {
                    let da = &d_att.row(g0 + i)[cols.clone()];
                    for j in 0..group {
                        let vj = &cache.v.row(g0 + j)[cols.clone()];
                        dp[i * group + j] = da.iter().zip(vj).map(|(&a, &b)| a * b).sum();
                        let w = p[i * group + j];
                        let dvj = &mut dv.row_mut(g0 + j)[cols.clone()];
                        for (o, &a) in dvj.iter_mut().zip(da) {
                            *o += w * a;
                        }
                    }
                }
                for i in 0..group {
                    let pr = &p[i * group..(i + 1) * group];
                    let dpr = &dp[i * group..(i + 1) * group];
                    let dot: T = pr.iter().zip(dpr).map(|(&a, &b)| a * b).sum();
                    for j in 0..group {
                        let ds = pr[j] * (dpr[j] - dot) * scale;
                        if ds == T::zero() {
                            continue;
                        }
                        let kj: Vec<T> = cache.k.row(g0 + j)[cols.clone()].to_vec();
                        let qi: Vec<T> = cache.q.row(g0 + i)[cols.clone()].to_vec();
                        for (o, &kv) in dq.row_mut(g0 + i)[cols.clone()].iter_mut().zip(&kj) {
                            *o += ds * kv;
                        }
                        for (o, &qv) in dk.row_mut(g0 + j)[cols.clone()].iter_mut().zip(&qi) {
                            *o += ds * qv;
                        }
                    }
                }
            }
        }
        let mut dz = self.query.backward(&cache.normed, &dq, true).expect("dx");
        dz.add_assign(&self.key.backward(&cache.normed, &dk, true).expect("dx"));
        dz.add_assign(&self.value.backward(&cache.normed, &dv, true).expect("dx"));
        let mut dx = self.norm.backward(&cache.norm, &dz);
        dx.add_assign(dy);
        dx
    }
}

impl<T: Scalar> Module<T> for AttentionBlock<T> {
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = prefixed("norm", self.norm.params_mut());
        out.extend(prefixed("query", self.query.params_mut()));
        out.extend(prefixed("key", self.key.params_mut()));
        out.extend(prefixed("value", self.value.params_mut()));
        out.extend(prefixed("output", self.output.params_mut()));
        out
    }

    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = prefixed("norm", self.norm.params());
        out.extend(prefixed("query", self.query.params()));
        out.extend(prefixed("key", self.key.params()));
        out.extend(prefixed("value", self.value.params()));
        out.extend(prefixed("output", self.output.params()));
        out
    }
}

/// A stack of [`AttentionBlock`]s applied in sequence.
#[derive(Debug, Clone)]
pub struct AttentionStack<T> {
    pub blocks: Vec<AttentionBlock<T>>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    blocks: Vec<BlockCache<T>>,
    group: usize,
}

impl<T: Scalar> AttentionStack<T> {
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        layers: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let blocks = (0..layers)
            .map(|_| AttentionBlock::new(dim, heads, rng))
            .collect::<Result<_, _>>()?;
        Ok(AttentionStack { blocks })
    }

    pub fn forward(&self, x: Matrix<T>, group: usize) -> Result<(Matrix<T>, AttentionCache<T>), NnError> {
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = x;
        for b in &self.blocks {
            let (y, c) = b.forward(&h, group)?;
            caches.push(c);
            h = y;
        }
        Ok((h, AttentionCache { blocks: caches, group }))
    }

    pub fn backward(&mut self, cache: &AttentionCache<T>, dy: Matrix<T>) -> Matrix<T> {
        let mut g = dy;
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = b.backward(c, &g, cache.group);
        }
        g
    }
}

impl<T: Scalar> Module<T> for AttentionStack<T> {
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.extend(prefixed(&i.to_string(), b.params_mut()));
        }
        out
    }

    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(prefixed(&i.to_string(), b.params()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, mse_loss, GradCheckOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn rejects_indivisible_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(AttentionStack::<f64>::new(10, 2, 4, &mut rng).is_err());
    }

    #[test]
    fn single_row_depends_only_on_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stack = AttentionStack::<f64>::new(8, 2, 4, &mut rng).unwrap();
        let x = input(3, 8, 1);
        let (y_all, _) = stack.forward(x.clone(), 1).unwrap();
        for r in 0..3 {
            let (y_one, _) = stack.forward(x.select_rows(&[r]), 1).unwrap();
            assert_eq!(y_one.row(0), y_all.row(r));
        }
    }

    #[test]
    fn permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stack = AttentionStack::<f64>::new(8, 3, 2, &mut rng).unwrap();
        let x = input(10, 8, 3);
        let perm = [4, 2, 0, 1, 3, 9, 5, 8, 6, 7];
        let (y, _) = stack.forward(x.clone(), 5).unwrap();
        let (yp, _) = stack.forward(x.select_rows(&perm), 5).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for c in 0..8 {
                assert!((yp.get(i, c) - y.get(p, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_value_and_output_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut stack = AttentionStack::<f64>::new(8, 2, 4, &mut rng).unwrap();
        for b in &mut stack.blocks {
            b.value.weight.value.fill(0.0);
            b.output.weight.value.fill(0.0);
        }
        let x = input(6, 8, 5);
        let (y, _) = stack.forward(x.clone(), 3).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut stack = AttentionStack::<f64>::new(8, 2, 2, &mut rng).unwrap();
        let x = input(6, 8, 8);
        let target = input(6, 8, 9);
        let report = gradient_check(
            &mut stack,
            |s, backprop| {
                let (y, cache) = s.forward(x.clone(), 3)?;
                let flat = |m: &Matrix<f64>| Matrix::from_vec(48, 1, m.as_slice().to_vec()).unwrap();
                let (loss, g) = mse_loss(&flat(&y), &flat(&target))?;
                if backprop {
                    s.backward(&cache, Matrix::from_vec(6, 8, g.into_vec()).unwrap());
                }
                Ok(loss)
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }
}
