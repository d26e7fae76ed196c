//! Minimal neural-network kernels: layers with analytic backward passes,
//! RMSprop/AdamW, and a checkpointing training loop.

mod layers;
mod network;
mod optim;
mod tensor;
mod train;

pub use layers::{AvgPool2, BatchNorm, Conv2d, Dense, GlobalAvgPool, Layer, Lstm, Param, Relu};
pub use network::{LayerSpec, Network, NetworkSpec};
pub use optim::{Optimizer, OptimizerKind, OptimizerSpec, StoppingRole};
pub use tensor::{mse, mse_loss, Tensor};
pub use train::{evaluate, train, SampleSet, TensorSet, TrainReport};

#[cfg(test)]
mod tests;
