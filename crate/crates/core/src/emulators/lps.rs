//! Two-stage linear pattern scaling: cumulative emissions to global-mean
//! temperature, then global-mean temperature to every grid cell.

use crate::dataset::{ScenarioInputs, CO2_CUM};
use crate::error::{shape, Error, Result};
use crate::stats::{ols, Line};
use ndarray::{Array2, Array3, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpsFit {
    pub w_global: f64,
    pub b_global: f64,
    /// `[lat, lon]`
    pub w_local: Array2<f64>,
    pub b_local: Array2<f64>,
}

impl LpsFit {
    pub fn n_params(&self) -> usize {
        2 * self.w_local.len() + 2
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.w_local.dim()
    }

    pub fn global_line(&self) -> Line<f64> {
        Line { slope: self.w_global, intercept: self.b_global }
    }

    /// Predicted global-mean temperature for cumulative emissions `x`.
    pub fn predict_global(&self, x: f64) -> f64 {
        self.w_global * x + self.b_global
    }

    /// Per-cell prediction for each year of a cumulative-emission series.
    pub fn predict_series(&self, xs: &[f64]) -> Array3<f64> {
        let (ni, nj) = self.grid_shape();
        let mut out = Array3::zeros((xs.len(), ni, nj));
        for (mut year, &x) in out.outer_iter_mut().zip(xs) {
            let tg = self.predict_global(x);
            ndarray::Zip::from(&mut year).and(&self.w_local).and(&self.b_local).for_each(|o, &w, &b| *o = w * tg + b);
        }
        out
    }
}

/// Fits pattern scaling on training scenarios pooled over all years.
///
/// `targets[s]` is the `[year, lat, lon]` ensemble mean of scenario `s` and
/// `global_temperature[s]` its area-weighted global-mean temperature. The
/// local stage regresses on that target temperature.
pub fn lps_fit(
    inputs: &[ScenarioInputs],
    targets: &[ArrayView3<f64>],
    global_temperature: &[Vec<f64>],
) -> Result<LpsFit> {
    if inputs.len() != targets.len() || inputs.len() != global_temperature.len() {
        return shape("inputs, targets and global temperatures must list the same scenarios");
    }
    let Some(first) = targets.first() else {
        return Err(Error::Domain("no training scenarios".into()));
    };
    let (_, ni, nj) = first.dim();
    let mut xs = Vec::new();
    let mut tg = Vec::new();
    for ((inp, tgt), temp) in inputs.iter().zip(targets).zip(global_temperature) {
        let x = inp.global_series(CO2_CUM)?;
        let (nt, i2, j2) = tgt.dim();
        if (i2, j2) != (ni, nj) {
            return shape("training targets have different grids");
        }
        if x.len() != nt || temp.len() != nt {
            return shape(format!(
                "scenario `{}`: {} input years, {} target years, {} temperature years",
                inp.scenario,
                x.len(),
                nt,
                temp.len()
            ));
        }
        xs.extend_from_slice(x);
        tg.extend_from_slice(temp);
    }
    let global = ols(&xs, &tg)?;

    // Every cell shares the regressor, so its centred sums are computed once.
    let m = tg.len() as f64;
    let t_mean = tg.iter().sum::<f64>() / m;
    let sxx: f64 = tg.iter().map(|t| (t - t_mean).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::SingularFit("global-mean temperature is constant over the training years".into()));
    }
    let mut sxy = Array2::<f64>::zeros((ni, nj));
    let mut y_sum = Array2::<f64>::zeros((ni, nj));
    let mut row = 0;
    for tgt in targets {
        for year in tgt.outer_iter() {
            let dt = tg[row] - t_mean;
            ndarray::Zip::from(&mut sxy).and(&mut y_sum).and(&year).for_each(|s, ys, &y| {
                *s += dt * y;
                *ys += y;
            });
            row += 1;
        }
    }
    let w_local = &sxy / sxx;
    let b_local = &y_sum / m - &w_local * t_mean;
    let fit = LpsFit { w_global: global.slope, b_global: global.intercept, w_local, b_local };
    if fit.w_local.iter().chain(fit.b_local.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SingularFit("non-finite local coefficients".into()));
    }
    Ok(fit)
}

/// `[year, lat, lon]` prediction from the cumulative-CO2 channel.
pub fn lps_predict(fit: &LpsFit, inputs: &ScenarioInputs) -> Result<Array3<f64>> {
    Ok(fit.predict_series(inputs.global_series(CO2_CUM)?))
}

/// Sum of squared local-stage residuals over the training data.
pub fn local_sse(fit: &LpsFit, targets: &[ArrayView3<f64>], global_temperature: &[Vec<f64>]) -> f64 {
    let mut sse = 0.0;
    for (tgt, temp) in targets.iter().zip(global_temperature) {
        for (year, &t) in tgt.axis_iter(Axis(0)).zip(temp) {
            ndarray::Zip::from(&year).and(&fit.w_local).and(&fit.b_local).for_each(|&y, &w, &b| {
                sse += (y - (w * t + b)).powi(2);
            });
        }
    }
    sse
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Channel;

    fn inputs(name: &str, xs: Vec<f64>) -> ScenarioInputs {
        ScenarioInputs {
            scenario: name.into(),
            years: (0..xs.len() as i32).collect(),
            channels: vec![Channel::global(CO2_CUM, "GtCO2", xs)],
        }
    }

    #[test]
    fn constant_temperature_gives_zero_global_slope() {
        let inp = inputs("a", vec![0.0, 1.0, 2.0]);
        let tgt = Array3::from_shape_fn((3, 1, 2), |(t, _, j)| t as f64 + j as f64);
        let temp = vec![1.0, 1.0, 1.0];
        // The global stage is fine, but the local stage has a constant regressor.
        let err = lps_fit(std::slice::from_ref(&inp), &[tgt.view()], std::slice::from_ref(&temp)).unwrap_err();
        assert!(matches!(err, Error::SingularFit(_)));
        let line = ols(inp.global_series(CO2_CUM).unwrap(), &temp).unwrap();
        assert_eq!((line.slope, line.intercept), (0.0, 1.0));
    }

    #[test]
    fn predict_needs_co2_channel() {
        let fit =
            LpsFit { w_global: 1.0, b_global: 0.0, w_local: Array2::ones((1, 1)), b_local: Array2::zeros((1, 1)) };
        let inp = ScenarioInputs { scenario: "x".into(), years: vec![0], channels: vec![] };
        assert!(matches!(lps_predict(&fit, &inp), Err(Error::MissingChannel(_))));
    }

    #[test]
    fn mismatched_years_rejected() {
        let inp = inputs("a", vec![0.0, 1.0, 2.0]);
        let tgt = Array3::<f64>::zeros((2, 1, 1));
        assert!(lps_fit(&[inp], &[tgt.view()], &[vec![0.0, 1.0]]).is_err());
    }
}
