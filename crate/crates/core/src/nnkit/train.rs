use super::network::Network;
use super::optim::{Optimizer, OptimizerSpec};
use super::tensor::{mse_loss, Tensor};
use crate::error::{shape, Error, Result};
use crate::scalar::Scalar;
use crate::seed::{self, Stream};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Indexable collection of `(input, target)` samples.
pub trait SampleSet<T: Scalar>: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inputs and targets of the given samples, stacked on the batch axis.
    fn gather(&self, idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>)>;
}

/// Samples held in two tensors sharing the leading axis.
#[derive(Debug, Clone)]
pub struct TensorSet<T> {
    pub inputs: Tensor<T>,
    pub targets: Tensor<T>,
}

impl<T: Scalar> TensorSet<T> {
    pub fn new(inputs: Tensor<T>, targets: Tensor<T>) -> Result<Self> {
        if inputs.batch() != targets.batch() {
            return shape(format!("{} inputs vs {} targets", inputs.batch(), targets.batch()));
        }
        Ok(Self { inputs, targets })
    }
}

impl<T: Scalar> SampleSet<T> for TensorSet<T> {
    fn len(&self) -> usize {
        self.inputs.batch()
    }

    fn gather(&self, idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
        Ok((self.inputs.gather(idx), self.targets.gather(idx)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training-batch loss per epoch.
    pub train_loss: Vec<f64>,
    /// Stopping-set MSE per epoch.
    pub stop_loss: Vec<f64>,
    pub initial_stop_loss: f64,
    /// Epoch of the restored checkpoint; 0 means the initial parameters.
    pub best_epoch: usize,
    pub best_stop_loss: f64,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

const EVAL_CHUNK: usize = 64;

/// Per-element MSE of `net` over a whole sample set in inference mode.
pub fn evaluate<T: Scalar>(net: &Network<T>, set: &dyn SampleSet<T>) -> Result<f64> {
    let n = set.len();
    let mut sum = 0.0;
    let mut count = 0usize;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, y) = set.gather(chunk)?;
        let p = net.predict(&x)?;
        if p.shape() != y.shape() {
            return shape(format!("prediction {:?} vs target {:?}", p.shape(), y.shape()));
        }
        sum += p
            .data()
            .iter()
            .zip(y.data())
            .map(|(&a, &b)| {
                let d = (a - b).to_f64_lossy();
                d * d
            })
            .sum::<f64>();
        count += p.len();
    }
    Ok(sum / count.max(1) as f64)
}

/// Mini-batch training with per-element MSE, keeping the checkpoint with
/// the lowest stopping-set loss.
///
/// Batch order is a seeded permutation per epoch, so identical seeds give
/// identical parameters.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    spec: &OptimizerSpec,
    train_set: &dyn SampleSet<T>,
    stop_set: &dyn SampleSet<T>,
    shuffle_seed: u64,
) -> Result<TrainReport> {
    spec.validate()?;
    if train_set.is_empty() || stop_set.is_empty() {
        return Err(Error::Domain("training and stopping sets must be non-empty".into()));
    }
    let mut opt = Optimizer::new(spec.clone(), net);
    let initial = evaluate(net, stop_set)?;
    if !initial.is_finite() {
        return Err(Error::Diverged { epoch: 0, loss: initial });
    }
    let mut best = (0usize, initial, net.snapshot());
    let mut report = TrainReport {
        train_loss: Vec::new(),
        stop_loss: Vec::new(),
        initial_stop_loss: initial,
        best_epoch: 0,
        best_stop_loss: initial,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=spec.max_epochs {
        let mut rng = seed::rng(seed::derive(shuffle_seed, Stream::Shuffle, &[epoch as u64]));
        order.shuffle(&mut rng);
        let lr = spec.learning_rate_at(epoch - 1);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(spec.batch_size) {
            let (x, y) = train_set.gather(chunk)?;
            net.zero_grad();
            let pred = net.forward(&x, true)?;
            let (loss, grad) = mse_loss(&pred, &y)?;
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            net.backward(&grad)?;
            opt.step(net, lr);
            epoch_loss += loss;
            batches += 1;
        }
        let stop = evaluate(net, stop_set)?;
        if !stop.is_finite() {
            return Err(Error::Diverged { epoch, loss: stop });
        }
        report.train_loss.push(epoch_loss / batches as f64);
        report.stop_loss.push(stop);
        if stop < best.1 {
            best = (epoch, stop, net.snapshot());
        }
        if let Some(p) = spec.patience {
            if epoch - best.0 >= p {
                break;
            }
        }
    }
    net.restore(&best.2)?;
    report.best_epoch = best.0;
    report.best_stop_loss = best.1;
    Ok(report)
}
