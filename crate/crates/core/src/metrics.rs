//! Latitude-weighted evaluation metrics on `[year, lat, lon]` fields.
//!
//! Both RMSEs take the square root of a square of a single difference, so
//! they are computed as absolute values.

use crate::error::{domain, shape, Error, Result};
use crate::scalar::Scalar;
use crate::stats::{self, Line};
use ndarray::{ArrayView3, Axis};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Normalizers smaller than this are flagged as unreliable.
pub const SMALL_NORMALIZER: f64 = 1e-6;
/// Weight of the global NRMSE in the total score.
pub const GLOBAL_WEIGHT: f64 = 5.0;

/// Per-row weights `α_i = cos(φ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatWeights<T> {
    alpha: Vec<T>,
}

impl<T: Scalar> LatWeights<T> {
    pub fn from_degrees(lats: &[T]) -> Self {
        let alpha = lats.iter().map(|&phi| phi.to_radians().cos().max(T::zero())).collect();
        Self { alpha }
    }

    pub fn uniform(n_lat: usize) -> Self {
        Self { alpha: vec![T::one(); n_lat] }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Area-weighted mean of one `[lat, lon]` map.
    pub fn global_mean(&self, field: ndarray::ArrayView2<T>) -> T {
        let n_lon = T::from_usize_lossy(field.len_of(Axis(1)));
        let mut num = T::zero();
        let mut wsum = T::zero();
        for (row, &a) in field.outer_iter().zip(&self.alpha) {
            num += a * row.iter().copied().sum::<T>();
            wsum += a;
        }
        num / (wsum * n_lon)
    }

    /// Area-weighted global mean for every year of a `[year, lat, lon]` field.
    pub fn global_series(&self, field: ArrayView3<T>) -> Vec<T> {
        field.outer_iter().map(|m| self.global_mean(m)).collect()
    }
}

fn check(pred: &ArrayView3<impl Scalar>, target: &ArrayView3<impl Scalar>, n_lat: usize) -> Result<()> {
    if pred.shape() != target.shape() {
        return shape(format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()));
    }
    if pred.len_of(Axis(0)) == 0 {
        return domain("empty evaluation window");
    }
    if pred.len_of(Axis(1)) != n_lat {
        return shape(format!("{} latitude weights for {} rows", n_lat, pred.len_of(Axis(1))));
    }
    Ok(())
}

/// Weighted mean absolute difference of per-cell time means.
pub fn rmse_spatial<T: Scalar>(pred: ArrayView3<T>, target: ArrayView3<T>, w: &LatWeights<T>) -> Result<T> {
    check(&pred, &target, w.len())?;
    let tp = pred.mean_axis(Axis(0)).expect("non-empty window");
    let tt = target.mean_axis(Axis(0)).expect("non-empty window");
    let diff = (&tp - &tt).mapv(|d| d.abs());
    Ok(w.global_mean(diff.view()))
}

/// Time-mean absolute difference of per-year area-weighted global means.
pub fn rmse_global<T: Scalar>(pred: ArrayView3<T>, target: ArrayView3<T>, w: &LatWeights<T>) -> Result<T> {
    check(&pred, &target, w.len())?;
    let gp = w.global_series(pred);
    let gt = w.global_series(target);
    let n = T::from_usize_lossy(gp.len());
    Ok(gp.iter().zip(&gt).map(|(&a, &b)| (a - b).abs()).sum::<T>() / n)
}

/// `|area-, time- and ensemble-mean of the target|` over the window.
pub fn normalizer<T: Scalar>(target_mean: ArrayView3<T>, w: &LatWeights<T>) -> T {
    let tm = target_mean.mean_axis(Axis(0)).expect("non-empty window");
    w.global_mean(tm.view()).abs()
}

pub fn nrmse<T: Scalar>(rmse: T, normalizer: T) -> Result<T> {
    if !(normalizer > T::zero()) || !normalizer.is_finite() {
        return Err(Error::Domain(format!("NRMSE normalizer must be positive, got {normalizer}")));
    }
    Ok(rmse / normalizer)
}

/// `NRMSE_s + 5 NRMSE_g`.
pub fn total_from_nrmse<T: Scalar>(nrmse_spatial: T, nrmse_global: T) -> T {
    nrmse_spatial + T::lit(GLOBAL_WEIGHT) * nrmse_global
}

/// Total NRMSE from the two RMSEs and the target ensemble mean.
pub fn nrmse_total<T: Scalar>(spatial: T, global: T, target_mean: ArrayView3<T>, w: &LatWeights<T>) -> Result<T> {
    let z = normalizer(target_mean, w);
    Ok(total_from_nrmse(nrmse(spatial, z)?, nrmse(global, z)?))
}

pub fn delta_rmse<T: Scalar>(score_a: T, score_b: T) -> T {
    score_a - score_b
}

/// Least-squares trend of `ys` against `xs`, using only points with
/// `lo <= x <= hi`.
pub fn linear_trend<T: Scalar>(xs: &[T], ys: &[T], range: (T, T)) -> Result<Line<T>> {
    if xs.len() != ys.len() {
        return shape(format!("{} x values vs {} y values", xs.len(), ys.len()));
    }
    let (lo, hi) = range;
    let (mx, my): (Vec<T>, Vec<T>) =
        xs.iter().zip(ys).filter(|(&x, _)| x >= lo && x <= hi).map(|(&x, &y)| (x, y)).unzip();
    stats::ols(&mx, &my)
}

/// All ClimateBench-style scores of one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub rmse_spatial: f64,
    pub rmse_global: f64,
    pub normalizer: f64,
    /// `None` when the normalizer is zero.
    pub nrmse_spatial: Option<f64>,
    pub nrmse_global: Option<f64>,
    pub nrmse_total: Option<f64>,
}

impl Scores {
    pub fn compute(pred: ArrayView3<f64>, target_mean: ArrayView3<f64>, w: &LatWeights<f64>) -> Result<Self> {
        let rs = rmse_spatial(pred, target_mean, w)?;
        let rg = rmse_global(pred, target_mean, w)?;
        let z = normalizer(target_mean, w);
        let (ns, ng) = (nrmse(rs, z).ok(), nrmse(rg, z).ok());
        Ok(Self {
            rmse_spatial: rs,
            rmse_global: rg,
            normalizer: z,
            nrmse_spatial: ns,
            nrmse_global: ng,
            nrmse_total: ns.zip(ng).map(|(s, g)| total_from_nrmse(s, g)),
        })
    }

    pub fn normalizer_is_small(&self) -> bool {
        self.normalizer < SMALL_NORMALIZER
    }

    /// `(metric, value)` pairs in table order; missing NRMSEs are skipped.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![("rmse_spatial", self.rmse_spatial), ("rmse_global", self.rmse_global)];
        if let Some(x) = self.nrmse_spatial {
            v.push(("nrmse_spatial", x));
        }
        if let Some(x) = self.nrmse_global {
            v.push(("nrmse_global", x));
        }
        if let Some(x) = self.nrmse_total {
            v.push(("nrmse_total", x));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub technique: String,
    pub variable: String,
    pub metric: String,
    pub value: f64,
}

/// Scoreboard in the layout of the benchmark results tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scoreboard {
    pub rows: Vec<ScoreRow>,
}

impl Scoreboard {
    pub fn push_scores(&mut self, technique: &str, variable: &str, scores: &Scores) {
        for (metric, value) in scores.entries() {
            self.rows.push(ScoreRow {
                technique: technique.into(),
                variable: variable.into(),
                metric: metric.into(),
                value,
            });
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(crate::ebm::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}
