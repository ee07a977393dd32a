//! Gradients of the cross-entropy objective, the diagonal Fisher estimate,
//! and the quadratic consolidation penalty built from it.

use serde::{Deserialize, Serialize};

use crate::matrix::Mat;
use crate::taskgen::Sample;
use crate::{Error, Result};

use super::{argmax, Network, LAYER_DIMS};

/// Consolidation state captured after the first task: the anchor weights, a
/// diagonal Fisher importance estimate, and the penalty strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwcState {
    pub anchor: Vec<Mat>,
    pub fisher: Vec<Mat>,
    pub lambda: f64,
}

impl EwcState {
    pub fn capture(net: &Network, task_train: &[Sample], lambda: f64) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::InvalidInput("lambda must be nonnegative".into()));
        }
        Ok(EwcState {
            anchor: net.weights.clone(),
            fisher: fisher_diagonal(net, task_train)?,
            lambda,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchor.len() != LAYER_DIMS.len() || self.fisher.len() != LAYER_DIMS.len() {
            return Err(Error::InvalidInput("consolidation layer count mismatch".into()));
        }
        for (l, (a, f)) in self.anchor.iter().zip(&self.fisher).enumerate() {
            if a.shape() != LAYER_DIMS[l] || f.shape() != LAYER_DIMS[l] {
                return Err(Error::InvalidInput(format!(
                    "consolidation shapes for layer {l} do not match the network"
                )));
            }
            if f.iter().any(|v| v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "fisher entries for layer {l} must be finite and nonnegative"
                )));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput("lambda must be nonnegative".into()));
        }
        Ok(())
    }

    /// Adds the penalty gradient `lambda * F * (theta - anchor)` in place.
    pub fn add_penalty_grad(&self, net: &Network, grads: &mut [Mat]) {
        for l in 0..grads.len() {
            let w = &net.weights[l];
            let a = &self.anchor[l];
            let f = &self.fisher[l];
            for r in 0..w.rows() {
                let (wr, ar, fr) = (w.row(r), a.row(r), f.row(r));
                let gr = grads[l].row_mut(r);
                for c in 0..wr.len() {
                    gr[c] += self.lambda * fr[c] * (wr[c] - ar[c]);
                }
            }
        }
    }
}

/// `(lambda / 2) * sum_i F_i (theta_i - anchor_i)^2`.
pub fn ewc_penalty(net: &Network, ewc: &EwcState) -> f64 {
    let mut acc = 0.0;
    for l in 0..net.weights.len() {
        let w = &net.weights[l];
        let a = &ewc.anchor[l];
        let f = &ewc.fisher[l];
        for r in 0..w.rows() {
            let (wr, ar, fr) = (w.row(r), a.row(r), f.row(r));
            for c in 0..wr.len() {
                let d = wr[c] - ar[c];
                acc += fr[c] * d * d;
            }
        }
    }
    0.5 * ewc.lambda * acc
}

/// Accumulates `scale` times the cross-entropy gradient of one sample into
/// `grads` and returns the sample's loss.
fn sample_grad_into(
    net: &Network,
    features: &[f64; 4],
    label: usize,
    scale: f64,
    grads: &mut [Mat],
) -> Result<f64> {
    let fp = net.forward(features)?;
    let n_layers = net.weights.len();
    let probs = fp.probs();
    let loss = -probs[label].max(1e-300).ln();

    // delta starts as the softmax-cross-entropy residual at the output
    let mut delta: Vec<f64> = probs.to_vec();
    delta[label] -= 1.0;

    for l in (0..n_layers).rev() {
        let input = &fp.post[l];
        for (i, &ai) in input.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let row = grads[l].row_mut(i);
            for (j, &dj) in delta.iter().enumerate() {
                row[j] += scale * ai * dj;
            }
        }
        if l == 0 {
            break;
        }
        let w = &net.weights[l];
        let mut prev = vec![0.0; w.rows()];
        for (i, p) in prev.iter_mut().enumerate() {
            let row = w.row(i);
            let mut acc = 0.0;
            for (j, &dj) in delta.iter().enumerate() {
                acc += row[j] * dj;
            }
            // input here is a tanh output, so 1 - a^2 is its derivative
            *p = acc * (1.0 - input[i] * input[i]);
        }
        delta = prev;
    }
    Ok(loss)
}

/// Gradient of the mean cross-entropy over a batch, one matrix per layer,
/// together with the mean loss.
pub fn backprop(net: &Network, batch: &[Sample]) -> Result<(Vec<Mat>, f64)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("backprop needs a nonempty batch".into()));
    }
    let mut grads: Vec<Mat> = net
        .weights
        .iter()
        .map(|w| Mat::zeros(w.rows(), w.cols()))
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for s in batch {
        loss += sample_grad_into(net, &s.features, s.label.as_u8() as usize, scale, &mut grads)?;
    }
    Ok((grads, loss * scale))
}

/// Diagonal Fisher estimate: the mean over samples of the squared gradient of
/// the log-probability of the model's own argmax class.
pub fn fisher_diagonal(net: &Network, data: &[Sample]) -> Result<Vec<Mat>> {
    if data.is_empty() {
        return Err(Error::InvalidInput("fisher needs a nonempty split".into()));
    }
    let mut fisher: Vec<Mat> = net
        .weights
        .iter()
        .map(|w| Mat::zeros(w.rows(), w.cols()))
        .collect();
    let mut scratch: Vec<Mat> = fisher.clone();
    let scale = 1.0 / data.len() as f64;
    for s in data {
        let label = argmax(net.forward(&s.features)?.probs());
        for m in scratch.iter_mut() {
            m.fill(0.0);
        }
        sample_grad_into(net, &s.features, label, 1.0, &mut scratch)?;
        for (f, g) in fisher.iter_mut().zip(&scratch) {
            for (fv, gv) in f.iter_mut().zip(g.iter()) {
                *fv += scale * gv * gv;
            }
        }
    }
    Ok(fisher)
}
