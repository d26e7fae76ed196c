//! Scalar fully connected regressor `x -> y` with standardized input.

use crate::error::{shape, Result};
use crate::nnkit::{train, Network, NetworkSpec, OptimizerSpec, Tensor, TensorSet, TrainReport};
use crate::scalar::{self, Scalar};
use crate::seed::{self, Stream};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcnConfig {
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerSpec,
}

impl Default for FcnConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 32], optimizer: OptimizerSpec::adamw_default() }
    }
}

#[derive(Debug, Clone)]
pub struct FcnFit<T: Scalar> {
    pub net: Network<T>,
    pub x_mean: T,
    pub x_std: T,
    pub report: TrainReport,
}

impl<T: Scalar> FcnFit<T> {
    fn standardize(&self, xs: &[T]) -> Tensor<T> {
        let data = xs.iter().map(|&x| (x - self.x_mean) / self.x_std).collect();
        Tensor::new(vec![xs.len(), 1], data).expect("length matches shape")
    }

    pub fn predict(&self, xs: &[T]) -> Result<Vec<T>> {
        Ok(self.net.predict(&self.standardize(xs))?.into_data())
    }
}

fn check_pairs<T>(xs: &[T], ys: &[T]) -> Result<()> {
    if xs.len() != ys.len() {
        return shape(format!("{} inputs vs {} targets", xs.len(), ys.len()));
    }
    Ok(())
}

/// Trains on `(xs, ys)` and keeps the checkpoint with the lowest MSE on
/// `(stop_xs, stop_ys)`.
pub fn fcn_fit<T: Scalar>(
    xs: &[T],
    ys: &[T],
    stop_xs: &[T],
    stop_ys: &[T],
    cfg: &FcnConfig,
    seed: u64,
) -> Result<FcnFit<T>> {
    check_pairs(xs, ys)?;
    check_pairs(stop_xs, stop_ys)?;
    let x_mean = scalar::mean(xs).unwrap_or_else(T::zero);
    let sd = scalar::variance(xs).unwrap_or_else(T::zero).sqrt();
    let x_std = if sd > T::zero() { sd } else { T::one() };
    let spec = NetworkSpec::mlp(1, &cfg.hidden, 1, seed::derive(seed, Stream::Init, &[]));
    let mut fit = FcnFit { net: Network::new(spec)?, x_mean, x_std, report: empty_report() };
    let column = |v: &[T]| Tensor::new(vec![v.len(), 1], v.to_vec());
    let train_set = TensorSet::new(fit.standardize(xs), column(ys)?)?;
    let stop_set = TensorSet::new(fit.standardize(stop_xs), column(stop_ys)?)?;
    let shuffle = seed::derive(seed, Stream::Shuffle, &[]);
    fit.report = train(&mut fit.net, &cfg.optimizer, &train_set, &stop_set, shuffle)?;
    Ok(fit)
}

fn empty_report() -> TrainReport {
    TrainReport {
        train_loss: Vec::new(),
        stop_loss: Vec::new(),
        initial_stop_loss: f64::NAN,
        best_epoch: 0,
        best_stop_loss: f64::NAN,
    }
}
