use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeInstance {
    pub encoding: Vec<f64>,
    pub label: usize,
}

/// Full-batch gradient descent on softmax cross-entropy with L2 decay on
/// the weights. Features are standardized with training-split statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub train_frac: f64,
    pub iterations: usize,
    pub step: f64,
    pub l2: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            train_frac: 0.8,
            iterations: 500,
            step: 0.1,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_classes: usize,
}

struct Softmax {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Softmax {
    fn logits(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.b[c] + self.w[c].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn predict(&self, x: &[f64], scratch: &mut [f64]) -> usize {
        self.logits(x, scratch);
        let mut best = 0;
        for c in 1..scratch.len() {
            if scratch[c] > scratch[best] {
                best = c;
            }
        }
        best
    }
}

/// Train a multinomial logistic regression on a random split of
/// `instances` and report accuracy on both parts. Deterministic in `seed`.
pub fn logistic_probe(
    instances: &[ProbeInstance],
    options: &ProbeOptions,
    seed: u64,
) -> Result<ProbeResult, EvalError> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for inst in instances {
        *counts.entry(inst.label).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(EvalError::DegenerateClasses(format!("{} class(es)", counts.len())));
    }
    if let Some((label, n)) = counts.iter().find(|(_, &n)| n < 2) {
        return Err(EvalError::DegenerateClasses(format!("class {label} has {n} instance(s)")));
    }
    let dim = instances[0].encoding.len();
    for inst in instances {
        if inst.encoding.len() != dim {
            return Err(EvalError::LengthMismatch(dim, inst.encoding.len()));
        }
        if inst.encoding.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
    }
    let class_of: BTreeMap<usize, usize> = counts.keys().enumerate().map(|(i, &l)| (l, i)).collect();
    let n_classes = class_of.len();

    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = instances.len();
    let n_train = ((options.train_frac * n as f64).round() as usize).clamp(1, n - 1);
    let (train_idx, test_idx) = order.split_at(n_train);

    let mut mean = vec![0.0; dim];
    for &i in train_idx {
        for (m, v) in mean.iter_mut().zip(&instances[i].encoding) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_train as f64);
    let mut sd = vec![0.0; dim];
    for &i in train_idx {
        for ((s, m), v) in sd.iter_mut().zip(&mean).zip(&instances[i].encoding) {
            *s += (v - m).powi(2);
        }
    }
    for s in sd.iter_mut() {
        *s = (*s / n_train as f64).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let standardize = |i: usize| -> Vec<f64> {
        instances[i]
            .encoding
            .iter()
            .zip(&mean)
            .zip(&sd)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    };
    let x_train: Vec<Vec<f64>> = train_idx.iter().map(|&i| standardize(i)).collect();
    let y_train: Vec<usize> = train_idx.iter().map(|&i| class_of[&instances[i].label]).collect();
    let x_test: Vec<Vec<f64>> = test_idx.iter().map(|&i| standardize(i)).collect();
    let y_test: Vec<usize> = test_idx.iter().map(|&i| class_of[&instances[i].label]).collect();

    let mut model = Softmax {
        w: vec![vec![0.0; dim]; n_classes],
        b: vec![0.0; n_classes],
    };
    let mut p = vec![0.0; n_classes];
    let inv_n = 1.0 / n_train as f64;
    for _ in 0..options.iterations {
        let mut gw = vec![vec![0.0; dim]; n_classes];
        let mut gb = vec![0.0; n_classes];
        for (x, &y) in x_train.iter().zip(&y_train) {
            model.logits(x, &mut p);
            let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in p.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            for (c, v) in p.iter().enumerate() {
                let g = (v / z - if c == y { 1.0 } else { 0.0 }) * inv_n;
                gb[c] += g;
                for (gwi, xi) in gw[c].iter_mut().zip(x) {
                    *gwi += g * xi;
                }
            }
        }
        for c in 0..n_classes {
            for (w, g) in model.w[c].iter_mut().zip(&gw[c]) {
                *w -= options.step * (g + options.l2 * *w);
            }
            model.b[c] -= options.step * gb[c];
        }
    }

    let accuracy = |xs: &[Vec<f64>], ys: &[usize], p: &mut [f64]| -> f64 {
        if xs.is_empty() {
            return f64::NAN;
        }
        let right = xs.iter().zip(ys).filter(|(x, &y)| model.predict(x, p) == y).count();
        right as f64 / xs.len() as f64
    };
    Ok(ProbeResult {
        train_accuracy: accuracy(&x_train, &y_train, &mut p),
        test_accuracy: accuracy(&x_test, &y_test, &mut p),
        n_train,
        n_test: n - n_train,
        n_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn separable_two_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data: Vec<ProbeInstance> = (0..100)
            .map(|i| {
                let label = i % 2;
                let shift = if label == 0 { -3.0 } else { 3.0 };
                ProbeInstance {
                    encoding: vec![shift + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    label,
                }
            })
            .collect();
        let r = logistic_probe(&data, &ProbeOptions::default(), 1).unwrap();
        assert_eq!(r.train_accuracy, 1.0);
        assert_eq!(r.test_accuracy, 1.0);
        assert_eq!((r.n_train, r.n_test), (80, 20));
    }

    #[test]
    fn memorizes_one_point_per_class() {
        let data: Vec<ProbeInstance> = (0..10)
            .flat_map(|c| {
                let mut e = vec![0.0; 10];
                e[c] = 1.0;
                vec![ProbeInstance { encoding: e, label: c }; 4]
            })
            .collect();
        let r = logistic_probe(&data, &ProbeOptions::default(), 3).unwrap();
        assert_eq!(r.train_accuracy, 1.0);
        assert_eq!(r.test_accuracy, 1.0);
    }

    #[test]
    fn rejects_degenerate_labels() {
        let one = |l| ProbeInstance { encoding: vec![0.0], label: l };
        assert!(logistic_probe(&[one(0), one(0)], &ProbeOptions::default(), 0).is_err());
        assert!(logistic_probe(&[one(0), one(0), one(1)], &ProbeOptions::default(), 0).is_err());
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<ProbeInstance> = (0..60)
            .map(|i| ProbeInstance {
                encoding: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                label: i % 3,
            })
            .collect();
        let a = logistic_probe(&data, &ProbeOptions::default(), 9).unwrap();
        assert_eq!(a, logistic_probe(&data, &ProbeOptions::default(), 9).unwrap());
    }
}
