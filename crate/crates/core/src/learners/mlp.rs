//! Single-hidden-layer perceptron with logistic units, trained by full-batch
//! gradient descent on the mean squared error against one-vs-all targets.
//!
//! Loss over a batch of `N` rows: `L = (1/N) Σ_n ½ Σ_k (o_nk − y_nk)²`.

use rand::Rng as _;

use crate::data::{Dataset, IndexSample};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const DEFAULT_EPOCHS: usize = 500;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const INIT_RANGE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlpOptions {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for MlpOptions {
    fn default() -> Self {
        MlpOptions {
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Weights in one flat buffer: the hidden layer (`hidden × (inputs+1)`,
/// bias last in each row) followed by the output layer
/// (`outputs × (hidden+1)`).
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
}

impl Network {
    pub fn n_weights(inputs: usize, hidden: usize, outputs: usize) -> usize {
        hidden * (inputs + 1) + outputs * (hidden + 1)
    }

    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Network {
            inputs,
            hidden,
            outputs,
            weights: vec![0.0; Self::n_weights(inputs, hidden, outputs)],
        }
    }

    /// Uniform weights in `[-0.5, 0.5]`.
    pub fn random(inputs: usize, hidden: usize, outputs: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let weights = (0..Self::n_weights(inputs, hidden, outputs))
            .map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE))
            .collect();
        Network {
            inputs,
            hidden,
            outputs,
            weights,
        }
    }

    fn split(&self) -> (&[f64], &[f64]) {
        self.weights.split_at(self.hidden * (self.inputs + 1))
    }

    fn forward_into(&self, x: &[f64], h: &mut [f64], o: &mut [f64]) {
        let (w1, w2) = self.split();
        let stride1 = self.inputs + 1;
        for (j, hj) in h.iter_mut().enumerate() {
            let w = &w1[j * stride1..(j + 1) * stride1];
            let z = w[self.inputs] + w[..self.inputs].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            *hj = sigmoid(z);
        }
        let stride2 = self.hidden + 1;
        for (k, ok) in o.iter_mut().enumerate() {
            let w = &w2[k * stride2..(k + 1) * stride2];
            let z = w[self.hidden] + w[..self.hidden].iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>();
            *ok = sigmoid(z);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden];
        let mut o = vec![0.0; self.outputs];
        self.forward_into(x, &mut h, &mut o);
        o
    }

    /// Argmax output, ties to the lowest class.
    pub fn predict(&self, x: &[f64]) -> usize {
        let o = self.forward(x);
        let mut best = 0;
        for k in 1..o.len() {
            if o[k] > o[best] {
                best = k;
            }
        }
        best
    }

    /// Loss and its analytic gradient over `rows` with class `targets`.
    pub fn loss_and_gradient<'a>(
        &self,
        rows: impl Iterator<Item = (&'a [f64], usize)>,
    ) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.weights.len()];
        let (w1_len, stride1, stride2) = (self.hidden * (self.inputs + 1), self.inputs + 1, self.hidden + 1);
        let mut h = vec![0.0; self.hidden];
        let mut o = vec![0.0; self.outputs];
        let mut delta_o = vec![0.0; self.outputs];
        let mut loss = 0.0;
        let mut count = 0usize;
        for (x, target) in rows {
            count += 1;
            self.forward_into(x, &mut h, &mut o);
            for k in 0..self.outputs {
                let y = if k == target { 1.0 } else { 0.0 };
                let e = o[k] - y;
                loss += 0.5 * e * e;
                delta_o[k] = e * o[k] * (1.0 - o[k]);
            }
            let w2 = &self.weights[w1_len..];
            for k in 0..self.outputs {
                let g = &mut grad[w1_len + k * stride2..w1_len + (k + 1) * stride2];
                for j in 0..self.hidden {
                    g[j] += delta_o[k] * h[j];
                }
                g[self.hidden] += delta_o[k];
            }
            for j in 0..self.hidden {
                let back: f64 = (0..self.outputs).map(|k| w2[k * stride2 + j] * delta_o[k]).sum();
                let delta_h = back * h[j] * (1.0 - h[j]);
                let g = &mut grad[j * stride1..(j + 1) * stride1];
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += delta_h * xi;
                }
                g[self.inputs] += delta_h;
            }
        }
        if count > 0 {
            let inv = 1.0 / count as f64;
            loss *= inv;
            grad.iter_mut().for_each(|g| *g *= inv);
        }
        (loss, grad)
    }

    pub fn fit(
        ds: &Dataset,
        sample: &IndexSample,
        hidden: usize,
        opts: &MlpOptions,
        seed: u64,
    ) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        if hidden == 0 {
            return Err(Error::InvalidArgument("hidden layer needs at least one unit".into()));
        }
        if let Some(&bad) = sample.indices.iter().find(|&&i| i >= ds.n_instances()) {
            return Err(Error::InvalidArgument(format!("sample index {bad} out of range")));
        }
        let mut net = Network::random(ds.n_features(), hidden, ds.n_classes(), seed);
        for _ in 0..opts.epochs {
            let (_, grad) =
                net.loss_and_gradient(sample.indices.iter().map(|&i| (ds.row(i), ds.label(i))));
            for (w, g) in net.weights.iter_mut().zip(&grad) {
                *w -= opts.learning_rate * g;
            }
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference oracle, independent of the backward pass.
    fn numeric_gradient(net: &Network, rows: &[(Vec<f64>, usize)], eps: f64) -> Vec<f64> {
        let loss = |n: &Network| -> f64 {
            let mut total = 0.0;
            for (x, t) in rows {
                let o = n.forward(x);
                for (k, ok) in o.iter().enumerate() {
                    let y = if k == *t { 1.0 } else { 0.0 };
                    total += 0.5 * (ok - y) * (ok - y);
                }
            }
            total / rows.len() as f64
        };
        (0..net.weights.len())
            .map(|i| {
                let mut plus = net.clone();
                plus.weights[i] += eps;
                let mut minus = net.clone();
                minus.weights[i] -= eps;
                (loss(&plus) - loss(&minus)) / (2.0 * eps)
            })
            .collect()
    }

    fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(1234);
        for seed in 0..10u64 {
            let rows: Vec<(Vec<f64>, usize)> = (0..5)
                .map(|_| {
                    ((0..3).map(|_| rng.random_range(-2.0..2.0)).collect(), rng.random_range(0..3))
                })
                .collect();
            let net = Network::random(3, 4, 3, seed);
            let (_, analytic) = net.loss_and_gradient(rows.iter().map(|(x, t)| (x.as_slice(), *t)));
            let numeric = numeric_gradient(&net, &rows, 1e-5);
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    // the default budget is tuned for standardized data; four raw binary
    // points need a larger step
    #[test]
    fn learns_and() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let ds = Dataset::from_rows(&rows, vec![0, 0, 0, 1], 2).unwrap();
        let sample = IndexSample {
            indices: vec![0, 1, 2, 3],
            with_replacement: false,
        };
        let opts = MlpOptions {
            learning_rate: 1.0,
            ..MlpOptions::default()
        };
        for seed in 0..10 {
            let net = Network::fit(&ds, &sample, 3, &opts, seed).unwrap();
            for i in 0..4 {
                assert_eq!(net.predict(ds.row(i)), ds.label(i), "seed {seed} row {i}");
            }
        }
        assert_eq!(
            Network::fit(&ds, &sample, 3, &opts, 5).unwrap(),
            Network::fit(&ds, &sample, 3, &opts, 5).unwrap()
        );
    }

    #[test]
    fn zero_weights_tie_to_class_zero() {
        let net = Network::zeros(2, 3, 2);
        assert_eq!(net.forward(&[1.0, -1.0]), [0.5, 0.5]);
        assert_eq!(net.predict(&[1.0, -1.0]), 0);
    }

    #[test]
    fn initial_weights_in_range() {
        let net = Network::random(5, 7, 2, 3);
        assert!(net.weights.iter().all(|w| w.abs() <= INIT_RANGE));
        assert_eq!(net.weights.len(), 7 * 6 + 2 * 8);
    }
}
