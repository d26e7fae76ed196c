//! Pattern scaling, the CNN-LSTM, and the scalar emulators used by the
//! bias–variance experiment, behind shared prediction traits.

mod cnnlstm;
mod fcn;
mod linear1d;
mod lps;

pub use cnnlstm::{cnnlstm_fit, cnnlstm_predict, CnnLstmConfig, CnnLstmFit, ScenarioSeries};
pub use fcn::{fcn_fit, FcnConfig, FcnFit};
pub use linear1d::{linear1d_fit, linear1d_predict};
pub use lps::{local_sse, lps_fit, lps_predict, LpsFit};

use crate::dataset::ScenarioInputs;
use crate::error::{Error, Result};
use crate::nnkit::TrainReport;
use crate::scalar::Scalar;
use crate::stats::Line;
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    Lps,
    #[serde(rename = "cnnlstm")]
    CnnLstm,
    Fcn,
    Linear1d,
}

impl Technique {
    pub fn as_str(self) -> &'static str {
        match self {
            Technique::Lps => "lps",
            Technique::CnnLstm => "cnnlstm",
            Technique::Fcn => "fcn",
            Technique::Linear1d => "linear1d",
        }
    }

    /// Whether fits depend on a weight-initialization seed.
    pub fn is_neural(self) -> bool {
        matches!(self, Technique::CnnLstm | Technique::Fcn)
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "lps" => Ok(Technique::Lps),
            "cnnlstm" => Ok(Technique::CnnLstm),
            "fcn" => Ok(Technique::Fcn),
            "linear1d" | "linear" => Ok(Technique::Linear1d),
            _ => Err(Error::Config(format!("unknown technique `{s}`"))),
        }
    }
}

/// Emulator mapping scenario forcing to `[year, lat, lon]` fields.
pub trait GriddedEmulator: Send + Sync {
    fn technique(&self) -> Technique;
    fn predict(&self, inputs: &ScenarioInputs) -> Result<Array3<f64>>;

    /// Training history of iteratively fitted emulators.
    fn report(&self) -> Option<&TrainReport> {
        None
    }
}

impl GriddedEmulator for LpsFit {
    fn technique(&self) -> Technique {
        Technique::Lps
    }

    fn predict(&self, inputs: &ScenarioInputs) -> Result<Array3<f64>> {
        lps_predict(self, inputs)
    }
}

impl GriddedEmulator for CnnLstmFit {
    fn technique(&self) -> Technique {
        Technique::CnnLstm
    }

    fn predict(&self, inputs: &ScenarioInputs) -> Result<Array3<f64>> {
        CnnLstmFit::predict(self, inputs)
    }

    fn report(&self) -> Option<&TrainReport> {
        Some(&self.report)
    }
}

/// Emulator mapping a scalar input series to a scalar output series.
pub trait ScalarEmulator<T: Scalar>: Send + Sync {
    fn technique(&self) -> Technique;
    fn predict(&self, xs: &[T]) -> Result<Vec<T>>;
}

impl<T: Scalar> ScalarEmulator<T> for Line<T> {
    fn technique(&self) -> Technique {
        Technique::Linear1d
    }

    fn predict(&self, xs: &[T]) -> Result<Vec<T>> {
        Ok(linear1d_predict(self, xs))
    }
}

impl<T: Scalar> ScalarEmulator<T> for FcnFit<T> {
    fn technique(&self) -> Technique {
        Technique::Fcn
    }

    fn predict(&self, xs: &[T]) -> Result<Vec<T>> {
        FcnFit::predict(self, xs)
    }
}

/// Provenance of one fitted emulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatorFitRecord {
    pub technique: Technique,
    pub n: usize,
    pub k: usize,
    /// Weight-initialization seed index `l`; `None` for closed-form fits.
    pub l: Option<usize>,
    pub seed: Option<u64>,
    pub report: Option<TrainReport>,
}
