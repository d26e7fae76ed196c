//! Monte-Carlo bias–variance decomposition of scalar emulators trained on
//! noisy ensemble means, and Fourier spectra of their signal-removed fits.

use crate::ebm::{self, EbmConfig, MemberPool};
use crate::emulators::{fcn_fit, linear1d_fit, linear1d_predict, FcnConfig, Technique};
use crate::error::{domain, shape, Error, Result};
use crate::scalar::Scalar;
use crate::seed::{self, Stream};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Evaluation window of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Window {
    /// Average of the last `len` steps, scored as one number per fit.
    EndOfSeries { len: usize },
    /// Pointwise decomposition averaged over every step.
    FullSeries,
}

impl Default for Window {
    fn default() -> Self {
        Window::EndOfSeries { len: 21 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvConfig<T> {
    pub ebm: EbmConfig<T>,
    pub n_grid: Vec<usize>,
    pub k_draws: usize,
    pub window: Window,
    pub techniques: Vec<Technique>,
    pub fcn: FcnConfig,
    pub base_seed: u64,
    /// Apply a Hann taper before the Fourier transform.
    pub hann: bool,
}

impl<T: Scalar> BvConfig<T> {
    /// `K = 200`.
    pub fn desk() -> Self {
        Self {
            ebm: EbmConfig::default(),
            n_grid: vec![2, 3, 5, 10, 20, 50],
            k_draws: 200,
            window: Window::default(),
            techniques: vec![Technique::Linear1d, Technique::Fcn],
            fcn: FcnConfig::default(),
            base_seed: seed::DEFAULT_BASE_SEED,
            hann: false,
        }
    }

    /// `K = 2000`.
    pub fn paper() -> Self {
        Self { k_draws: 2000, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        self.ebm.validate()?;
        self.fcn.optimizer.validate()?;
        if self.k_draws < 2 {
            return Err(Error::Config("K must be at least 2".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::Config("n grid must be non-empty and positive".into()));
        }
        if let Window::EndOfSeries { len } = self.window {
            if len == 0 || len > self.ebm.n_steps() {
                return Err(Error::Config(format!("window of {len} steps does not fit {} steps", self.ebm.n_steps())));
            }
        }
        if let Some(t) = self.techniques.iter().find(|t| !matches!(t, Technique::Linear1d | Technique::Fcn)) {
            return Err(Error::Config(format!("technique `{t}` is not a scalar emulator")));
        }
        Ok(())
    }
}

/// `(Bias², Var, MSE)` of one technique at one `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition<T> {
    pub bias2: T,
    pub var: T,
    pub mse: T,
}

/// Decomposes the squared errors of `fits` against the target `forced`.
///
/// The mean fit enters both the bias and the variance, so
/// `mse = bias2 + var` up to round-off.
pub fn decompose<T: Scalar>(fits: &[T], forced: T) -> Result<Decomposition<T>> {
    if fits.len() < 2 {
        return domain("variance needs at least two fits");
    }
    let k = T::from_usize_lossy(fits.len());
    let mean = fits.iter().copied().sum::<T>() / k;
    let bias = mean - forced;
    let var = fits.iter().map(|&f| (f - mean) * (f - mean)).sum::<T>() / k;
    let mse = fits.iter().map(|&f| (f - forced) * (f - forced)).sum::<T>() / k;
    Ok(Decomposition { bias2: bias * bias, var, mse })
}

/// Pointwise decomposition averaged over steps.
pub fn decompose_series<T: Scalar>(fits: &[Vec<T>], forced: &[T]) -> Result<Decomposition<T>> {
    check_lengths(fits, forced)?;
    let n = T::from_usize_lossy(forced.len());
    let mut acc = Decomposition { bias2: T::zero(), var: T::zero(), mse: T::zero() };
    let mut column = Vec::with_capacity(fits.len());
    for (t, &f) in forced.iter().enumerate() {
        column.clear();
        column.extend(fits.iter().map(|s| s[t]));
        let d = decompose(&column, f)?;
        acc.bias2 += d.bias2;
        acc.var += d.var;
        acc.mse += d.mse;
    }
    Ok(Decomposition { bias2: acc.bias2 / n, var: acc.var / n, mse: acc.mse / n })
}

fn check_lengths<T>(fits: &[Vec<T>], forced: &[T]) -> Result<()> {
    if let Some(bad) = fits.iter().find(|f| f.len() != forced.len()) {
        return shape(format!("fit of length {} vs forced signal of length {}", bad.len(), forced.len()));
    }
    Ok(())
}

/// `V_v = mean_k |DFT(fit_k - forced)_v|^2` for every bin `v` in `0..T`,
/// with the unnormalized forward transform.
pub fn fourier_spectrum<T: Scalar>(fits: &[Vec<T>], forced: &[T], hann: bool) -> Result<Vec<T>> {
    check_lengths(fits, forced)?;
    if fits.is_empty() {
        return domain("spectrum needs at least one fit");
    }
    let len = forced.len();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let taper: Vec<f64> = (0..len)
        .map(|t| {
            if hann && len > 1 {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * t as f64 / (len - 1) as f64).cos()
            } else {
                1.0
            }
        })
        .collect();
    let mut energy = vec![0.0f64; len];
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for fit in fits {
        for (t, b) in buf.iter_mut().enumerate() {
            *b = Complex::new((fit[t] - forced[t]).to_f64_lossy() * taper[t], 0.0);
        }
        fft.process(&mut buf);
        for (e, b) in energy.iter_mut().zip(&buf) {
            *e += b.norm_sqr();
        }
    }
    let k = fits.len() as f64;
    Ok(energy.into_iter().map(|e| T::lit(e / k)).collect())
}

/// Bins `1..=T/2` of a spectrum with their periods `T dt / v`.
pub fn one_sided<T: Scalar>(spectrum: &[T], dt: f64) -> Vec<(f64, T)> {
    let len = spectrum.len();
    (1..=len / 2).map(|v| (len as f64 * dt / v as f64, spectrum[v])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvEntry<T> {
    pub technique: Technique,
    pub n: usize,
    pub decomposition: Decomposition<T>,
    /// Mean fit over draws at every step.
    pub mean_fit: Vec<T>,
    /// Variance of fits over draws at every step.
    pub var_fit: Vec<T>,
    /// `(period, energy)` for bins `1..=T/2`.
    pub spectrum: Vec<(f64, T)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvResult<T> {
    pub forced: Vec<T>,
    pub entries: Vec<BvEntry<T>>,
}

impl<T: Scalar> BvResult<T> {
    pub fn entry(&self, technique: Technique, n: usize) -> Option<&BvEntry<T>> {
        self.entries.iter().find(|e| e.technique == technique && e.n == n)
    }

    /// Columns `technique, n, bias2, var, mse`.
    pub fn write_biasvar_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["technique", "n", "bias2", "var", "mse"]).map_err(ebm::csv_err)?;
        for e in &self.entries {
            let d = &e.decomposition;
            w.write_record([
                e.technique.to_string(),
                e.n.to_string(),
                format!("{:e}", d.bias2.to_f64_lossy()),
                format!("{:e}", d.var.to_f64_lossy()),
                format!("{:e}", d.mse.to_f64_lossy()),
            ])
            .map_err(ebm::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `technique, n, period, energy`.
    pub fn write_spectra_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["technique", "n", "period", "energy"]).map_err(ebm::csv_err)?;
        for e in &self.entries {
            for &(p, v) in &e.spectrum {
                w.write_record([
                    e.technique.to_string(),
                    e.n.to_string(),
                    format!("{p:e}"),
                    format!("{:e}", v.to_f64_lossy()),
                ])
                .map_err(ebm::csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `technique, n, t, forced, mean_fit, var_fit`.
    pub fn write_bands_csv<W: Write>(&self, years: &[T], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["technique", "n", "t", "forced", "mean_fit", "var_fit"]).map_err(ebm::csv_err)?;
        for e in &self.entries {
            for (t, year) in years.iter().enumerate() {
                w.write_record([
                    e.technique.to_string(),
                    e.n.to_string(),
                    format!("{}", year.to_f64_lossy()),
                    format!("{:e}", self.forced[t].to_f64_lossy()),
                    format!("{:e}", e.mean_fit[t].to_f64_lossy()),
                    format!("{:e}", e.var_fit[t].to_f64_lossy()),
                ])
                .map_err(ebm::csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits every technique on draw `(n, k)`; returns one prediction series per
/// technique in configuration order.
fn fit_draw<T: Scalar>(cfg: &BvConfig<T>, xs: &[T], n: usize, k: usize) -> Result<Vec<Vec<T>>> {
    let train = ebm::ensemble_mean_training_set(&cfg.ebm, n, k, cfg.base_seed, MemberPool::Unbounded)?;
    let mut out = Vec::with_capacity(cfg.techniques.len());
    let mut validation = None;
    for t in &cfg.techniques {
        let pred = match t {
            Technique::Linear1d => linear1d_predict(&linear1d_fit(xs, &train)?, xs),
            Technique::Fcn => {
                if validation.is_none() {
                    let vseed = seed::derive(cfg.base_seed, Stream::Validation, &[]);
                    validation = Some(ebm::ensemble_mean_training_set(&cfg.ebm, n, k, vseed, MemberPool::Unbounded)?);
                }
                let v = validation.as_deref().expect("set above");
                let fseed = seed::derive(cfg.base_seed, Stream::Init, &[n as u64, k as u64]);
                fcn_fit(xs, &train, xs, v, &cfg.fcn, fseed)?.predict(xs)?
            }
            other => return Err(Error::Config(format!("technique `{other}` is not a scalar emulator"))),
        };
        out.push(pred);
    }
    Ok(out)
}

/// Runs every `(n, k)` draw and aggregates per technique and `n`.
pub fn run_biasvar<T: Scalar>(cfg: &BvConfig<T>) -> Result<BvResult<T>> {
    cfg.validate()?;
    let xs = cfg.ebm.emission_series();
    let forced = ebm::forced_signal(&cfg.ebm)?.response;
    let tasks: Vec<(usize, usize)> = cfg.n_grid.iter().flat_map(|&n| (0..cfg.k_draws).map(move |k| (n, k))).collect();
    let fits = tasks.par_iter().map(|&(n, k)| fit_draw(cfg, &xs, n, k)).collect::<Result<Vec<_>>>()?;

    let len = forced.len();
    let kk = T::from_usize_lossy(cfg.k_draws);
    let mut entries = Vec::new();
    for (ti, &technique) in cfg.techniques.iter().enumerate() {
        for (gi, &n) in cfg.n_grid.iter().enumerate() {
            let series: Vec<Vec<T>> = (0..cfg.k_draws).map(|k| fits[gi * cfg.k_draws + k][ti].clone()).collect();
            let decomposition = match cfg.window {
                Window::EndOfSeries { len: w } => {
                    let avg = |s: &[T]| s[len - w..].iter().copied().sum::<T>() / T::from_usize_lossy(w);
                    let vals: Vec<T> = series.iter().map(|s| avg(s)).collect();
                    decompose(&vals, avg(&forced))?
                }
                Window::FullSeries => decompose_series(&series, &forced)?,
            };
            let mut mean_fit = vec![T::zero(); len];
            for s in &series {
                for (m, &v) in mean_fit.iter_mut().zip(s) {
                    *m += v;
                }
            }
            mean_fit.iter_mut().for_each(|m| *m /= kk);
            let mut var_fit = vec![T::zero(); len];
            for s in &series {
                for ((v, &x), &m) in var_fit.iter_mut().zip(s).zip(&mean_fit) {
                    *v += (x - m) * (x - m);
                }
            }
            var_fit.iter_mut().for_each(|v| *v /= kk);
            let spectrum = one_sided(&fourier_spectrum(&series, &forced, cfg.hann)?, cfg.ebm.dt.to_f64_lossy());
            entries.push(BvEntry { technique, n, decomposition, mean_fit, var_fit, spectrum });
        }
    }
    Ok(BvResult { forced, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_decomposition() {
        let d = decompose(&[1.0f64, -1.0, 0.0], 0.0).unwrap();
        assert_eq!(d.bias2, 0.0);
        assert!((d.var - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.mse - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pure_bias_and_perfect_fits() {
        let d = decompose(&[0.5, 0.5, 0.5], 0.0).unwrap();
        assert_eq!((d.bias2, d.var, d.mse), (0.25, 0.0, 0.25));
        let d = decompose(&[2.0f32, 2.0], 2.0).unwrap();
        assert_eq!((d.bias2, d.var, d.mse), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_fit_is_rejected() {
        assert!(decompose(&[1.0], 0.0).is_err());
    }

    #[test]
    fn cosine_energy_lands_in_two_bins() {
        let len = 64;
        let (a, v0) = (0.7, 5usize);
        let forced = vec![0.0; len];
        let fit: Vec<f64> =
            (0..len).map(|t| a * (2.0 * std::f64::consts::PI * (v0 * t) as f64 / len as f64).cos()).collect();
        let s = fourier_spectrum(&[fit], &forced, false).unwrap();
        let expect = (a * len as f64 / 2.0).powi(2);
        for (v, &e) in s.iter().enumerate() {
            if v == v0 || v == len - v0 {
                assert!((e - expect).abs() < 1e-9 * expect);
            } else {
                assert!(e < 1e-18, "bin {v}: {e}");
            }
        }
    }

    #[test]
    fn one_sided_periods() {
        let s = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(one_sided(&s, 1.0), vec![(6.0, 1.0), (3.0, 2.0), (2.0, 3.0)]);
    }

    #[test]
    fn noise_free_linear_fits_have_no_variance() {
        let mut cfg = BvConfig::<f64>::desk();
        cfg.ebm.sigma = 0.0;
        cfg.k_draws = 4;
        cfg.n_grid = vec![1, 7];
        cfg.techniques = vec![Technique::Linear1d];
        let r = run_biasvar(&cfg).unwrap();
        for e in &r.entries {
            assert_eq!(e.decomposition.var, 0.0);
            assert!(e.decomposition.bias2 > 0.0);
        }
    }
}
