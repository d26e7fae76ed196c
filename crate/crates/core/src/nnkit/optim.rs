use super::network::Network;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Rmsprop { rho: f64, eps: f64 },
    AdamW { beta1: f64, beta2: f64, eps: f64 },
}

/// Which data decides the early-stopping checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingRole {
    Train,
    HeldOut,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without improvement; `None` runs all epochs.
    pub patience: Option<usize>,
    /// Cosine decay of the learning rate over `max_epochs`.
    pub cosine_decay: bool,
    pub stopping: StoppingRole,
}

impl OptimizerSpec {
    /// RMSprop, lr 1e-3, no weight decay, batch 16.
    pub fn rmsprop_default() -> Self {
        Self {
            kind: OptimizerKind::Rmsprop { rho: 0.9, eps: 1e-7 },
            learning_rate: 1e-3,
            weight_decay: 0.0,
            batch_size: 16,
            max_epochs: 30,
            patience: Some(5),
            cosine_decay: false,
            stopping: StoppingRole::HeldOut,
        }
    }

    /// AdamW, lr 1e-3, weight decay 1e-2, 150 epochs, best checkpoint kept.
    pub fn adamw_default() -> Self {
        Self {
            kind: OptimizerKind::AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8 },
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            batch_size: 32,
            max_epochs: 150,
            patience: Some(150),
            cosine_decay: false,
            stopping: StoppingRole::HeldOut,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.cosine_decay && self.max_epochs > 0 {
            let p = epoch as f64 / self.max_epochs as f64;
            0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * p).cos())
        } else {
            self.learning_rate
        }
    }
}

/// Optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    spec: OptimizerSpec,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(spec: OptimizerSpec, net: &Network<T>) -> Self {
        let zeros: Vec<Vec<T>> = net.params().iter().map(|p| vec![T::zero(); p.len()]).collect();
        Self { spec, first: zeros.clone(), second: zeros, steps: 0 }
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    /// Applies one update from the gradients accumulated in `net`.
    pub fn step(&mut self, net: &mut Network<T>, learning_rate: f64) {
        self.steps += 1;
        let lr = T::lit(learning_rate);
        let wd = T::lit(self.spec.weight_decay);
        match self.spec.kind {
            OptimizerKind::Rmsprop { rho, eps } => {
                let (rho, eps) = (T::lit(rho), T::lit(eps));
                for (p, v) in net.params_mut().into_iter().zip(&mut self.second) {
                    for ((w, &g), s) in p.value.iter_mut().zip(&p.grad).zip(v.iter_mut()) {
                        let g = g + wd * *w;
                        *s = rho * *s + (T::one() - rho) * g * g;
                        *w -= lr * g / (s.sqrt() + eps);
                    }
                }
            }
            OptimizerKind::AdamW { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = T::lit(1.0 - beta1.powi(t));
                let c2 = T::lit(1.0 - beta2.powi(t));
                let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
                for ((p, m), v) in net.params_mut().into_iter().zip(&mut self.first).zip(&mut self.second) {
                    for (((w, &g), mk), vk) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *w -= lr * wd * *w;
                        *mk = b1 * *mk + (T::one() - b1) * g;
                        *vk = b2 * *vk + (T::one() - b2) * g * g;
                        let m_hat = *mk / c1;
                        let v_hat = *vk / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
