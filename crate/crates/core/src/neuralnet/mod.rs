//! The continual-learning perceptron: a bias-free 4-12-6-3 network with tanh
//! hidden layers and a softmax head, plus training, consolidation,
//! quantization and the linear reference classifier.

mod grad;
mod io;
mod quantize;
mod train;

pub use grad::{backprop, ewc_penalty, fisher_diagonal, EwcState};
pub use io::{
    load_solution, read_history_csv, save_solution, write_history_csv, SolutionFile,
    HISTORY_CSV_HEADER, SOLUTION_FILE_VERSION,
};
pub use quantize::{adapt_for_ternary, select_solution, ternarize, TernarySolution};
pub use train::{
    linear_baseline, train_continual, EpochRecord, Hyperparams, Method, TrainHistory,
    TrainOutcome,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Mat;
use crate::rngutil::{derive_seed, rng_from};
use crate::taskgen::Sample;
use crate::{Error, Result};

/// Layer shapes, input side first. No biases anywhere.
pub const LAYER_DIMS: [(usize, usize); 3] = [(4, 12), (12, 6), (6, 3)];

pub const N_CLASSES: usize = 3;

/// Weights for the fixed topology. `weights[l]` has shape
/// `(fan_in, fan_out)`; activations are tanh on every layer but the last,
/// which feeds a softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub weights: Vec<Mat>,
}

/// Intermediate activations of one forward pass. `post[0]` is the input,
/// `post[l]` the output of layer `l`, and the last entry holds the softmax
/// probabilities.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub post: Vec<Vec<f64>>,
}

impl ForwardPass {
    pub fn probs(&self) -> &[f64] {
        self.post.last().expect("forward pass has layers")
    }
}

impl Network {
    /// Fan-in scaled uniform init, deterministic per seed.
    pub fn init(seed: u64) -> Self {
        let mut rng = rng_from(derive_seed(seed, "net/init", 0));
        let weights = LAYER_DIMS
            .iter()
            .map(|&(fi, fo)| {
                let bound = (6.0 / (fi + fo) as f64).sqrt();
                Mat::from_fn(fi, fo, |_, _| rng.gen::<f64>() * 2.0 * bound - bound)
            })
            .collect();
        Network { weights }
    }

    pub fn from_weights(weights: Vec<Mat>) -> Result<Self> {
        if weights.len() != LAYER_DIMS.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} layers, got {}",
                LAYER_DIMS.len(),
                weights.len()
            )));
        }
        for (l, (w, &(fi, fo))) in weights.iter().zip(&LAYER_DIMS).enumerate() {
            if w.shape() != (fi, fo) {
                return Err(Error::InvalidInput(format!(
                    "layer {l} shape {:?} does not match ({fi}, {fo})",
                    w.shape()
                )));
            }
        }
        Ok(Network { weights })
    }

    pub fn zeros() -> Self {
        Network {
            weights: LAYER_DIMS.iter().map(|&(fi, fo)| Mat::zeros(fi, fo)).collect(),
        }
    }

    pub fn forward(&self, features: &[f64; 4]) -> Result<ForwardPass> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input features"));
        }
        let mut post = Vec::with_capacity(self.weights.len() + 1);
        post.push(features.to_vec());
        let last = self.weights.len() - 1;
        for (l, w) in self.weights.iter().enumerate() {
            let a = &post[l];
            let mut z = vec![0.0; w.cols()];
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                let row = w.row(i);
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj += ai * row[j];
                }
            }
            if l == last {
                softmax_in_place(&mut z);
            } else {
                for v in z.iter_mut() {
                    *v = v.tanh();
                }
            }
            post.push(z);
        }
        Ok(ForwardPass { post })
    }

    /// Argmax class; ties resolve to the lowest index.
    pub fn predict(&self, features: &[f64; 4]) -> Result<usize> {
        Ok(argmax(self.forward(features)?.probs()))
    }

    /// Fraction of argmax-correct predictions over a split.
    pub fn evaluate(&self, split: &[Sample]) -> Result<f64> {
        if split.is_empty() {
            return Err(Error::InvalidInput("cannot evaluate an empty split".into()));
        }
        let mut correct = 0usize;
        for s in split {
            if self.predict(&s.features)? == s.label.as_u8() as usize {
                correct += 1;
            }
        }
        Ok(correct as f64 / split.len() as f64)
    }
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{Label, TaskId};

    fn random_net(seed: u64) -> Network {
        Network::init(seed)
    }

    fn random_input(seed: u64) -> [f64; 4] {
        let mut rng = rng_from(seed);
        std::array::from_fn(|_| rng.gen::<f64>() * 2.0)
    }

    /// Straight-line re-implementation with explicit index arithmetic, kept
    /// deliberately separate from the production loop shapes.
    fn oracle_forward(net: &Network, x: &[f64; 4]) -> [f64; 3] {
        let w1 = &net.weights[0];
        let w2 = &net.weights[1];
        let w3 = &net.weights[2];
        let mut h1 = [0.0f64; 12];
        for j in 0..12 {
            let mut acc = 0.0;
            for i in 0..4 {
                acc += x[i] * w1.at(i, j);
            }
            h1[j] = acc.tanh();
        }
        let mut h2 = [0.0f64; 6];
        for j in 0..6 {
            let mut acc = 0.0;
            for i in 0..12 {
                acc += h1[i] * w2.at(i, j);
            }
            h2[j] = acc.tanh();
        }
        let mut z = [0.0f64; 3];
        for j in 0..3 {
            for i in 0..6 {
                z[j] += h2[i] * w3.at(i, j);
            }
        }
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        [e[0] / s, e[1] / s, e[2] / s]
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        for k in 0..50u64 {
            let net = random_net(k);
            let x = random_input(1000 + k);
            let got = net.forward(&x).unwrap();
            let want = oracle_forward(&net, &x);
            for (a, b) in got.probs().iter().zip(want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one_and_hiddens_bounded() {
        for k in 0..20u64 {
            let net = random_net(k);
            let x = random_input(k + 77);
            let fp = net.forward(&x).unwrap();
            let sum: f64 = fp.probs().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(fp.probs().iter().all(|&p| p >= 0.0));
            for layer in &fp.post[1..fp.post.len() - 1] {
                assert!(layer.iter().all(|v| v.abs() < 1.0));
            }
        }
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let net = Network::zeros();
        let fp = net.forward(&[0.3, 0.7, 0.7, 0.3]).unwrap();
        for &p in fp.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rejects_non_finite_input() {
        let net = random_net(0);
        assert!(net.forward(&[f64::NAN, 0.0, 1.0, 1.0]).is_err());
        assert!(net.forward(&[f64::INFINITY, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let a = Network::init(9);
        let b = Network::init(9);
        let c = Network::init(10);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (w, &(fi, fo)) in a.weights.iter().zip(&LAYER_DIMS) {
            let bound = (6.0 / (fi + fo) as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= bound && v.is_finite()));
        }
    }

    #[test]
    fn predict_breaks_ties_low_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5, 0.0]), 0);
        let net = random_net(3);
        for k in 0..1000u64 {
            let x = random_input(k);
            let fp = net.forward(&x).unwrap();
            assert_eq!(net.predict(&x).unwrap(), argmax(fp.probs()));
        }
    }

    #[test]
    fn evaluate_matches_hand_count() {
        let net = random_net(5);
        let mut samples = Vec::new();
        let mut correct = 0;
        for k in 0..10u64 {
            let x = random_input(200 + k);
            let pred = net.predict(&x).unwrap();
            // alternate between matching and deliberately wrong labels
            let label = if k % 2 == 0 { pred } else { (pred + 1) % 3 };
            if label == pred {
                correct += 1;
            }
            samples.push(Sample {
                task: TaskId::Task1,
                x: x[0],
                y: x[1],
                features: x,
                label: Label::from_u8(label as u8).unwrap(),
            });
        }
        let acc = net.evaluate(&samples).unwrap();
        assert!((acc - correct as f64 / 10.0).abs() < 1e-15);
    }

    #[test]
    fn from_weights_checks_shapes() {
        let bad = vec![Mat::zeros(4, 12), Mat::zeros(12, 6)];
        assert!(Network::from_weights(bad).is_err());
        let wrong = vec![Mat::zeros(4, 12), Mat::zeros(12, 7), Mat::zeros(7, 3)];
        assert!(Network::from_weights(wrong).is_err());
    }
}
