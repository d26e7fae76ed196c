//! Benchmarking toolkit for climate emulators under internal variability.
//!
//! The numeric kernels (`ebm`, `metrics`, `stats`, `biasvar`, `nnkit`) are
//! generic over [`Scalar`] (`f32` or `f64`); the gridded data model and the
//! experiment harnesses work in `f64`, the dtype of the on-disk format.
//! Concrete `f64` aliases for the generic types live at the crate root.

pub mod biasvar;
pub mod dataset;
pub mod ebm;
pub mod emulators;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod nnkit;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod synthgrid;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type EbmConfig = ebm::EbmConfig<f64>;
pub type EbmRealization = ebm::EbmRealization<f64>;
pub type LatWeights = metrics::LatWeights<f64>;
pub type Line = stats::Line<f64>;
pub type Network = nnkit::Network<f64>;
pub type Tensor = nnkit::Tensor<f64>;
pub type BvConfig = biasvar::BvConfig<f64>;
pub type BvResult = biasvar::BvResult<f64>;

pub type EbmConfigF32 = ebm::EbmConfig<f32>;
pub type NetworkF32 = nnkit::Network<f32>;
