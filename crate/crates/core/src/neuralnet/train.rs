//! Two-phase continual training with optional weight consolidation, plus the
//! linear reference classifier both tasks are compared against.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Mat;
use crate::rngutil::{derive_seed, rng_from};
use crate::taskgen::{MultiTaskDataset, Sample, TaskId};
use crate::{Error, Result};

use super::grad::{backprop, ewc_penalty, EwcState};
use super::quantize::ternary_view;
use super::{argmax, softmax_in_place, Network, N_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Sgd,
    Ewc,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Sgd => "SGD",
            Method::Ewc => "EWC",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "SGD" => Ok(Method::Sgd),
            "EWC" => Ok(Method::Ewc),
            other => Err(Error::InvalidInput(format!("unknown method tag {other:?}"))),
        }
    }

    fn stream(self) -> u64 {
        match self {
            Method::Sgd => 0,
            Method::Ewc => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_per_task: usize,
    /// Consolidation strength. Values much above ~15 put the penalty
    /// gradient outside the stable step-size region for the default learning
    /// rate and some runs blow up.
    pub lambda: f64,
    /// Epochs of quantization adaptation run after float training, with the
    /// batch gradient taken at the thresholded weights.
    pub adapt_epochs: usize,
    pub adapt_lr: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.05,
            batch_size: 32,
            epochs_per_task: 100,
            lambda: 15.0,
            adapt_epochs: 30,
            adapt_lr: 0.01,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be positive".into()));
        }
        if self.epochs_per_task == 0 {
            return Err(Error::InvalidInput("epochs_per_task must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput("lambda must be nonnegative".into()));
        }
        if !(self.adapt_lr > 0.0 && self.adapt_lr.is_finite()) {
            return Err(Error::InvalidInput("adapt_lr must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub method: Method,
    pub task1_acc: f64,
    pub task2_acc: f64,
    /// Mean training cross-entropy for the epoch, plus the consolidation
    /// penalty at the epoch's end while it is active.
    pub loss: f64,
}

pub type TrainHistory = Vec<EpochRecord>;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Network,
    pub history: TrainHistory,
    /// Present for the consolidation method: the state captured after the
    /// first task, reused by quantization adaptation.
    pub ewc: Option<EwcState>,
}

/// Runs one epoch of minibatch SGD over `train`, returning the mean sample
/// loss. With `ste` set, gradients are evaluated at the thresholded ternary
/// view of the weights while updates still apply to the float weights.
pub(crate) fn sgd_epoch(
    net: &mut Network,
    train: &[Sample],
    batch_size: usize,
    lr: f64,
    penalty: Option<&EwcState>,
    ste: bool,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(rng);
    let mut loss_sum = 0.0;
    let mut batch = Vec::with_capacity(batch_size);
    for chunk in idx.chunks(batch_size) {
        batch.clear();
        batch.extend(chunk.iter().map(|&i| train[i].clone()));
        let (mut grads, loss) = if ste {
            let view = ternary_view(net)?;
            backprop(&view, &batch)?
        } else {
            backprop(net, &batch)?
        };
        if let Some(ewc) = penalty {
            ewc.add_penalty_grad(net, &mut grads);
        }
        loss_sum += loss * batch.len() as f64;
        for (w, g) in net.weights.iter_mut().zip(&grads) {
            for (wv, gv) in w.iter_mut().zip(g.iter()) {
                *wv -= lr * gv;
            }
        }
    }
    Ok(loss_sum / train.len() as f64)
}

fn run_phase(
    net: &mut Network,
    data: &MultiTaskDataset,
    task: TaskId,
    method: Method,
    hp: &Hyperparams,
    penalty: Option<&EwcState>,
    epoch_base: usize,
    history: &mut TrainHistory,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let train = data.train(task);
    for e in 0..hp.epochs_per_task {
        let epoch = epoch_base + e + 1;
        let mut loss = sgd_epoch(
            net,
            train,
            hp.batch_size,
            hp.learning_rate,
            penalty,
            false,
            rng,
        )?;
        if let Some(ewc) = penalty {
            loss += ewc_penalty(net, ewc);
        }
        if !loss.is_finite() || net.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch, loss });
        }
        history.push(EpochRecord {
            epoch,
            method,
            task1_acc: net.evaluate(data.test(TaskId::Task1))?,
            task2_acc: net.evaluate(data.test(TaskId::Task2))?,
            loss,
        });
    }
    Ok(())
}

/// Trains on Task 1, then on Task 2, recording both tasks' test accuracy
/// every epoch. With [`Method::Ewc`] the second phase adds the quadratic
/// penalty anchored at the phase-1 solution.
pub fn train_continual(
    seed: u64,
    data: &MultiTaskDataset,
    method: Method,
    hp: &Hyperparams,
) -> Result<TrainOutcome> {
    hp.validate()?;
    for task in [TaskId::Task1, TaskId::Task2] {
        if data.train(task).is_empty() || data.test(task).is_empty() {
            return Err(Error::InvalidInput("dataset has an empty split".into()));
        }
    }
    let mut net = Network::init(seed);
    let mut rng = rng_from(derive_seed(seed, "train/shuffle", method.stream()));
    let mut history = Vec::with_capacity(2 * hp.epochs_per_task);

    run_phase(
        &mut net, data, TaskId::Task1, method, hp, None, 0, &mut history, &mut rng,
    )?;

    let ewc = match method {
        Method::Sgd => None,
        Method::Ewc => Some(EwcState::capture(&net, data.train(TaskId::Task1), hp.lambda)?),
    };
    run_phase(
        &mut net,
        data,
        TaskId::Task2,
        method,
        hp,
        ewc.as_ref(),
        hp.epochs_per_task,
        &mut history,
        &mut rng,
    )?;

    Ok(TrainOutcome { net, history, ewc })
}

/// Test accuracy of a bias-free multinomial logistic regression on the raw
/// 4-dimensional features, trained by full-batch gradient descent from zero
/// until the gradient norm drops below 1e-6 or 10^4 iterations pass.
pub fn linear_baseline(train: &[Sample], test: &[Sample]) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidInput("baseline needs nonempty splits".into()));
    }
    let n = train.len();
    let mut w = Mat::zeros(4, N_CLASSES);
    let lr = 0.1;
    for _ in 0..10_000 {
        let mut grad = Mat::zeros(4, N_CLASSES);
        for s in train {
            let mut z = [0.0; N_CLASSES];
            for (i, &xi) in s.features.iter().enumerate() {
                let row = w.row(i);
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj += xi * row[j];
                }
            }
            softmax_in_place(&mut z);
            z[s.label.as_u8() as usize] -= 1.0;
            for (i, &xi) in s.features.iter().enumerate() {
                let row = grad.row_mut(i);
                for (j, &dj) in z.iter().enumerate() {
                    row[j] += xi * dj / n as f64;
                }
            }
        }
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-6 {
            break;
        }
        for (wv, gv) in w.iter_mut().zip(grad.iter()) {
            *wv -= lr * gv;
        }
    }
    let mut correct = 0usize;
    for s in test {
        let mut z = [0.0; N_CLASSES];
        for (i, &xi) in s.features.iter().enumerate() {
            let row = w.row(i);
            for (j, zj) in z.iter_mut().enumerate() {
                *zj += xi * row[j];
            }
        }
        if argmax(&z) == s.label.as_u8() as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{Label, YinYangGeometry};
    use rand::Rng;

    fn tiny_hp() -> Hyperparams {
        Hyperparams {
            epochs_per_task: 3,
            ..Hyperparams::default()
        }
    }

    fn small_data() -> MultiTaskDataset {
        MultiTaskDataset::generate(77, 240, 90, &YinYangGeometry::default()).unwrap()
    }

    #[test]
    fn history_has_one_row_per_epoch_in_order() {
        let data = small_data();
        let out = train_continual(1, &data, Method::Sgd, &tiny_hp()).unwrap();
        assert_eq!(out.history.len(), 6);
        for (i, rec) in out.history.iter().enumerate() {
            assert_eq!(rec.epoch, i + 1);
            assert_eq!(rec.method, Method::Sgd);
            assert!(rec.loss.is_finite());
            assert!((0.0..=1.0).contains(&rec.task1_acc));
        }
        assert!(out.ewc.is_none());
    }

    #[test]
    fn training_is_bit_reproducible_per_seed() {
        let data = small_data();
        let a = train_continual(5, &data, Method::Ewc, &tiny_hp()).unwrap();
        let b = train_continual(5, &data, Method::Ewc, &tiny_hp()).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.history, b.history);
        let c = train_continual(6, &data, Method::Ewc, &tiny_hp()).unwrap();
        assert_ne!(a.net, c.net);
    }

    #[test]
    fn ewc_run_captures_consolidation_state() {
        let data = small_data();
        let out = train_continual(2, &data, Method::Ewc, &tiny_hp()).unwrap();
        let ewc = out.ewc.expect("consolidation state");
        ewc.validate().unwrap();
        assert!(ewc.fisher.iter().any(|f| f.iter().any(|v| v > 0.0)));
    }

    #[test]
    fn runaway_penalty_reports_divergence() {
        // a penalty step this size doubles the weight deviation every
        // update, so the second phase blows up quickly
        let data = small_data();
        let hp = Hyperparams {
            lambda: 1e9,
            epochs_per_task: 4,
            ..Hyperparams::default()
        };
        match train_continual(1, &data, Method::Ewc, &hp) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn hyperparams_validation_rejects_nonsense() {
        let mut hp = Hyperparams::default();
        hp.batch_size = 0;
        assert!(hp.validate().is_err());
        let mut hp = Hyperparams::default();
        hp.learning_rate = -1.0;
        assert!(hp.validate().is_err());
        assert!(Hyperparams::default().validate().is_ok());
    }

    fn cluster_sample(center: [f64; 4], label: u8, rng: &mut impl Rng) -> Sample {
        let features: [f64; 4] =
            std::array::from_fn(|i| center[i] + 0.02 * (rng.gen::<f64>() - 0.5));
        Sample {
            task: TaskId::Task1,
            x: features[0],
            y: features[1],
            features,
            label: Label::from_u8(label).unwrap(),
        }
    }

    #[test]
    fn baseline_solves_a_separable_toy_problem() {
        let centers = [
            [0.9, 0.1, 0.1, 0.1],
            [0.1, 0.9, 0.1, 0.1],
            [0.1, 0.1, 0.9, 0.1],
        ];
        let mut rng = crate::rngutil::rng_from(42);
        let train: Vec<Sample> = (0..90)
            .map(|k| cluster_sample(centers[k % 3], (k % 3) as u8, &mut rng))
            .collect();
        let test: Vec<Sample> = (0..30)
            .map(|k| cluster_sample(centers[k % 3], (k % 3) as u8, &mut rng))
            .collect();
        let acc = linear_baseline(&train, &test).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn baseline_on_shuffled_labels_is_near_chance() {
        let data = MultiTaskDataset::generate(13, 1000, 1000, &YinYangGeometry::default()).unwrap();
        let mut rng = crate::rngutil::rng_from(99);
        let shuffle_labels = |samples: &[Sample], rng: &mut crate::rngutil::ChaCha8Rng| {
            let mut out = samples.to_vec();
            let mut labels: Vec<Label> = out.iter().map(|s| s.label).collect();
            labels.shuffle(rng);
            for (s, l) in out.iter_mut().zip(labels) {
                s.label = l;
            }
            out
        };
        let train = shuffle_labels(&data.train_task1, &mut rng);
        let test = shuffle_labels(&data.test_task1, &mut rng);
        let acc = linear_baseline(&train, &test).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 0.05, "accuracy {acc}");
    }

    #[test]
    fn baseline_is_deterministic() {
        let data = small_data();
        let a = linear_baseline(&data.train_task1, &data.test_task1).unwrap();
        let b = linear_baseline(&data.train_task1, &data.test_task1).unwrap();
        assert_eq!(a, b);
    }
}
