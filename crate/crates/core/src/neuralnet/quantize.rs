//! Threshold ternarization with per-layer scales, the short adaptation run
//! that makes thresholded weights usable, and candidate selection.

use serde::{Deserialize, Serialize};

use crate::matrix::{Mat, TernaryMat};
use crate::rngutil::{derive_seed, rng_from};
use crate::taskgen::{MultiTaskDataset, TaskId};
use crate::{Error, Result};

use super::grad::EwcState;
use super::train::{sgd_epoch, Hyperparams};
use super::Network;

/// A ternary network: integer matrices in {-1, 0, +1} plus one positive
/// scale per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TernarySolution {
    pub ternary: Vec<TernaryMat>,
    pub scales: Vec<f64>,
    /// Test accuracy of the scaled ternary network on (task1, task2).
    /// Zero until the training pipeline fills it in.
    pub accuracy: [f64; 2],
}

impl TernarySolution {
    /// Dense float network with weights `scale_l * T_l`, for evaluation.
    pub fn to_network(&self) -> Network {
        Network {
            weights: self
                .ternary
                .iter()
                .zip(&self.scales)
                .map(|(t, &s)| t.to_mat(s))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ternary.len() != self.scales.len() {
            return Err(Error::InvalidInput(
                "ternary layer and scale counts differ".into(),
            ));
        }
        if let Some(l) = self.scales.iter().position(|s| !(s > &0.0 && s.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "scale for layer {l} must be positive"
            )));
        }
        Ok(())
    }

    pub fn with_accuracy(mut self, data: &MultiTaskDataset) -> Result<Self> {
        let net = self.to_network();
        self.accuracy = [
            net.evaluate(data.test(TaskId::Task1))?,
            net.evaluate(data.test(TaskId::Task2))?,
        ];
        Ok(self)
    }
}

/// Thresholds one weight matrix: entries with `|w|` above 0.7 times the mean
/// magnitude keep their sign, the rest drop to zero; the scale is the mean
/// magnitude of the surviving entries. `None` when nothing survives.
pub(crate) fn ternarize_mat(w: &Mat) -> Option<(TernaryMat, f64)> {
    let delta = 0.7 * w.mean_abs();
    let mut data = Vec::with_capacity(w.rows() * w.cols());
    let mut kept_sum = 0.0;
    let mut kept = 0usize;
    for v in w.iter() {
        if v.abs() > delta {
            data.push(if v > 0.0 { 1i8 } else { -1i8 });
            kept_sum += v.abs();
            kept += 1;
        } else {
            data.push(0);
        }
    }
    if kept == 0 {
        return None;
    }
    let t = TernaryMat::new(w.rows(), w.cols(), data).expect("entries are ternary");
    Some((t, kept_sum / kept as f64))
}

/// Snaps every layer to its ternary form.
pub fn ternarize(net: &Network) -> Result<TernarySolution> {
    let mut ternary = Vec::with_capacity(net.weights.len());
    let mut scales = Vec::with_capacity(net.weights.len());
    for (layer, w) in net.weights.iter().enumerate() {
        let (t, s) = ternarize_mat(w).ok_or(Error::DegenerateLayer { layer })?;
        ternary.push(t);
        scales.push(s);
    }
    Ok(TernarySolution {
        ternary,
        scales,
        accuracy: [0.0, 0.0],
    })
}

/// Float network carrying the scaled ternary weights of `net`, used to take
/// gradients at the quantized point during adaptation.
pub(crate) fn ternary_view(net: &Network) -> Result<Network> {
    Ok(ternarize(net)?.to_network())
}

/// Fine-tunes a trained float network so that its thresholded form keeps both
/// tasks' accuracy: a short straight-through run on the second task's data
/// with the consolidation penalty still anchored at the first task.
pub fn adapt_for_ternary(
    net: &Network,
    data: &MultiTaskDataset,
    ewc: &EwcState,
    hp: &Hyperparams,
    seed: u64,
) -> Result<Network> {
    hp.validate()?;
    ewc.validate()?;
    let mut latent = net.clone();
    let mut rng = rng_from(derive_seed(seed, "train/adapt", 0));
    for _ in 0..hp.adapt_epochs {
        let loss = sgd_epoch(
            &mut latent,
            data.train(TaskId::Task2),
            hp.batch_size,
            hp.adapt_lr,
            Some(ewc),
            true,
            &mut rng,
        )?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: 0, loss });
        }
    }
    Ok(latent)
}

/// Picks the candidate with the best worst-task accuracy among those beating
/// the linear baseline on both tasks.
pub fn select_solution(
    candidates: &[TernarySolution],
    baseline: [f64; 2],
) -> Result<TernarySolution> {
    let mut best: Option<&TernarySolution> = None;
    for c in candidates {
        if !(c.accuracy[0] > baseline[0] && c.accuracy[1] > baseline[1]) {
            continue;
        }
        let score = c.accuracy[0].min(c.accuracy[1]);
        if best.map_or(true, |b| score > b.accuracy[0].min(b.accuracy[1])) {
            best = Some(c);
        }
    }
    best.cloned().ok_or(Error::NoQualifyingSolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::YinYangGeometry;

    #[test]
    fn uniform_positive_layer_keeps_everything() {
        let w = Mat::from_fn(2, 3, |_, _| 0.4);
        let (t, s) = ternarize_mat(&w).unwrap();
        assert!(t.iter().all(|v| v == 1));
        assert!((s - 0.4).abs() < 1e-15);
    }

    #[test]
    fn hand_case_row() {
        let w = Mat::from_rows(&[vec![-1.0, 0.1, 1.0]]).unwrap();
        let (t, s) = ternarize_mat(&w).unwrap();
        let got: Vec<i8> = t.iter().collect();
        assert_eq!(got, vec![-1, 0, 1]);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ternarize_is_odd_symmetric() {
        let net = Network::init(3);
        let neg = Network {
            weights: net.weights.iter().map(|w| w.scaled(-1.0)).collect(),
        };
        let a = ternarize(&net).unwrap();
        let b = ternarize(&neg).unwrap();
        for l in 0..3 {
            assert!((a.scales[l] - b.scales[l]).abs() < 1e-15);
            for (x, y) in a.ternary[l].iter().zip(b.ternary[l].iter()) {
                assert_eq!(x, -y);
            }
        }
    }

    #[test]
    fn all_zero_layer_is_degenerate() {
        match ternarize(&Network::zeros()) {
            Err(Error::DegenerateLayer { layer: 0 }) => {}
            other => panic!("expected degenerate layer, got {other:?}"),
        }
    }

    #[test]
    fn ternary_network_entries_and_scales_are_legal() {
        let sol = ternarize(&Network::init(8)).unwrap();
        sol.validate().unwrap();
        let net = sol.to_network();
        for (l, w) in net.weights.iter().enumerate() {
            let s = sol.scales[l];
            assert!(w
                .iter()
                .all(|v| v == 0.0 || (v - s).abs() < 1e-15 || (v + s).abs() < 1e-15));
        }
    }

    fn with_acc(t1: f64, t2: f64) -> TernarySolution {
        let mut sol = ternarize(&Network::init(1)).unwrap();
        sol.accuracy = [t1, t2];
        sol
    }

    #[test]
    fn selection_prefers_best_worst_task() {
        let baseline = [0.5, 0.5];
        let lone = [with_acc(0.6, 0.8)];
        assert_eq!(select_solution(&lone, baseline).unwrap().accuracy, [0.6, 0.8]);
        let pair = [with_acc(0.6, 0.9), with_acc(0.7, 0.8)];
        assert_eq!(select_solution(&pair, baseline).unwrap().accuracy, [0.7, 0.8]);
        let none = [with_acc(0.4, 0.9), with_acc(0.9, 0.5)];
        match select_solution(&none, baseline) {
            Err(Error::NoQualifyingSolution) => {}
            other => panic!("expected no qualifying solution, got {other:?}"),
        }
    }

    #[test]
    fn adaptation_is_deterministic_and_finite() {
        let data = MultiTaskDataset::generate(21, 180, 60, &YinYangGeometry::default()).unwrap();
        let hp = Hyperparams {
            epochs_per_task: 2,
            adapt_epochs: 2,
            ..Hyperparams::default()
        };
        let out = super::super::train_continual(4, &data, super::super::Method::Ewc, &hp).unwrap();
        let ewc = out.ewc.unwrap();
        let a = adapt_for_ternary(&out.net, &data, &ewc, &hp, 4).unwrap();
        let b = adapt_for_ternary(&out.net, &data, &ewc, &hp, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.weights.iter().all(|w| w.is_finite()));
        assert_ne!(a, out.net, "adaptation should move the weights");
    }
}
