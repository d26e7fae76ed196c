//! Single-column stochastic energy-balance model.
//!
//! A column's temperature anomaly follows
//!
//! ```text
//! dT = (r / C) X dt + (λ / C) T dt + σ dW,    dW ~ N(0, dt)
//! ```
//!
//! with `C = ρ_w c_w h`, integrated with explicit Euler steps of `dt` years.
//! The deterministic terms are in SI units, so their step length is converted
//! to seconds; the noise amplitude `σ` is in K·yr^-1/2 and uses `dt` in years.
//! A hypothetical precipitation-like variable is obtained from the
//! temperature through the quadratic response `g(T) = a (b T)^2`.

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;
use crate::seed::{self, Stream};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Seconds in a Julian year.
pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

/// Cumulative-emission pathway driving the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Emissions<T> {
    /// `x_peak * exp(-(t - t_peak)^2 / (2 sigma_x^2))`
    Gaussian,
    /// The same value at every step.
    Constant { value: T },
    /// One value per integration step, starting at `t0`.
    Series { values: Vec<T> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbmConfig<T> {
    /// Cumulative emissions at the peak, GtX.
    pub x_peak: T,
    /// Peak year.
    pub t_peak: T,
    /// Width of the emission pulse, yr.
    pub sigma_x: T,
    /// Radiative forcing per unit cumulative emissions, W m^-2 GtX^-1.
    pub r: T,
    /// Water density, kg m^-3.
    pub rho_w: T,
    /// Specific heat of water, J kg^-1 K^-1.
    pub c_w: T,
    /// Effective column depth, m.
    pub h: T,
    /// Feedback parameter, W m^-2 K^-1. Must be negative.
    pub lambda: T,
    /// Noise amplitude, K yr^-1/2.
    pub sigma: T,
    /// Step length, yr.
    pub dt: T,
    pub t0: T,
    pub t_max: T,
    /// Initial temperature anomaly, K.
    pub t_init: T,
    pub g_scale: T,
    pub g_gain: T,
    pub emissions: Emissions<T>,
}

impl<T: Scalar> Default for EbmConfig<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            x_peak: l(5000.0),
            t_peak: l(250.0),
            sigma_x: l(50.0),
            r: l(0.0008),
            rho_w: l(997.0),
            c_w: l(4184.0),
            h: l(150.0),
            lambda: l(-2.0),
            sigma: l(0.15),
            dt: l(1.0),
            t0: l(0.0),
            t_max: l(250.0),
            t_init: l(0.0),
            g_scale: l(0.03),
            g_gain: l(4.0),
            emissions: Emissions::Gaussian,
        }
    }
}

impl<T: Scalar> EbmConfig<T> {
    /// Column heat capacity `C = ρ_w c_w h`, J m^-2 K^-1.
    pub fn heat_capacity(&self) -> T {
        self.rho_w * self.c_w * self.h
    }

    /// Number of stored steps, `(t_max - t0) / dt`.
    pub fn n_steps(&self) -> usize {
        ((self.t_max - self.t0) / self.dt).round().to_usize().unwrap_or(0)
    }

    pub fn time(&self, step: usize) -> T {
        self.t0 + T::from_usize_lossy(step) * self.dt
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.n_steps()).map(|s| self.time(s)).collect()
    }

    /// Equilibrium temperature under constant emissions `x`: `-r x / λ`.
    pub fn equilibrium(&self, x: T) -> T {
        -self.r * x / self.lambda
    }

    /// Feedback damping per step, `-λ dt / C` (dimensionless).
    pub fn damping_per_step(&self) -> T {
        -self.lambda * self.dt * T::lit(SECONDS_PER_YEAR) / self.heat_capacity()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let all_finite = [
            self.x_peak,
            self.t_peak,
            self.sigma_x,
            self.r,
            self.rho_w,
            self.c_w,
            self.h,
            self.lambda,
            self.sigma,
            self.dt,
            self.t0,
            self.t_max,
            self.t_init,
            self.g_scale,
            self.g_gain,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("ebm parameters must be finite");
        }
        if !(self.lambda < T::zero()) {
            return bad("lambda must be negative");
        }
        if !(self.heat_capacity() > T::zero()) {
            return bad("heat capacity rho_w * c_w * h must be positive");
        }
        if !(self.dt > T::zero()) {
            return bad("dt must be positive");
        }
        if !(self.t_max > self.t0) || self.n_steps() == 0 {
            return bad("t_max must exceed t0 by at least one step");
        }
        if self.sigma < T::zero() {
            return bad("sigma must be non-negative");
        }
        if !(self.sigma_x > T::zero()) {
            return bad("sigma_x must be positive");
        }
        if let Emissions::Series { values } = &self.emissions {
            if values.len() != self.n_steps() {
                return bad("emission series length must equal the number of steps");
            }
        }
        Ok(())
    }

    fn emission_at_step(&self, step: usize) -> T {
        match &self.emissions {
            Emissions::Gaussian => {
                let d = self.time(step) - self.t_peak;
                self.x_peak * (-(d * d) / (T::lit(2.0) * self.sigma_x * self.sigma_x)).exp()
            }
            Emissions::Constant { value } => *value,
            Emissions::Series { values } => values[step],
        }
    }

    /// Emission series at every stored step.
    pub fn emission_series(&self) -> Vec<T> {
        (0..self.n_steps()).map(|s| self.emission_at_step(s)).collect()
    }
}

/// Cumulative emissions at year `t`.
pub fn emission_at<T: Scalar>(cfg: &EbmConfig<T>, t: T) -> Result<T> {
    if !(t >= cfg.t0 && t < cfg.t_max) {
        return domain(format!("year {t} outside [{}, {})", cfg.t0, cfg.t_max));
    }
    match &cfg.emissions {
        Emissions::Gaussian => {
            let d = t - cfg.t_peak;
            Ok(cfg.x_peak * (-(d * d) / (T::lit(2.0) * cfg.sigma_x * cfg.sigma_x)).exp())
        }
        Emissions::Constant { value } => Ok(*value),
        Emissions::Series { values } => {
            let step = ((t - cfg.t0) / cfg.dt).floor().to_usize().unwrap_or(0);
            values.get(step).copied().ok_or_else(|| Error::Domain(format!("no emission value for year {t}")))
        }
    }
}

/// The quadratic response `g(T) = g_scale (g_gain T)^2`.
#[inline]
pub fn response_g<T: Scalar>(cfg: &EbmConfig<T>, temp: T) -> T {
    let u = cfg.g_gain * temp;
    cfg.g_scale * u * u
}

/// One trajectory of the column model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbmRealization<T> {
    pub years: Vec<T>,
    pub emissions: Vec<T>,
    pub temperature: Vec<T>,
    pub response: Vec<T>,
    /// `None` for the noise-free forced signal.
    pub seed: Option<u64>,
}

impl<T: Scalar> EbmRealization<T> {
    pub fn len(&self) -> usize {
        self.temperature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temperature.is_empty()
    }

    /// Writes the trajectory as CSV with columns `t, X_t, T_t, y_t`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "X_t", "T_t", "y_t"]).map_err(csv_err)?;
        for i in 0..self.len() {
            w.write_record([
                self.years[i].to_string(),
                self.emissions[i].to_string(),
                self.temperature[i].to_string(),
                self.response[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Integrates the temperature equation; `noise()` supplies `σ dW` for each
/// step after the first.
fn integrate<T: Scalar>(cfg: &EbmConfig<T>, mut noise: impl FnMut() -> T) -> Vec<T> {
    let n = cfg.n_steps();
    let dt_s = cfg.dt * T::lit(SECONDS_PER_YEAR);
    let cap = cfg.heat_capacity();
    let forcing_gain = cfg.r / cap * dt_s;
    let feedback_gain = cfg.lambda / cap * dt_s;
    let mut temp = Vec::with_capacity(n);
    let mut prev = cfg.t_init;
    temp.push(prev);
    for step in 1..n {
        let x = cfg.emission_at_step(step);
        let next = prev + forcing_gain * x + feedback_gain * prev + noise();
        temp.push(next);
        prev = next;
    }
    temp
}

fn finish<T: Scalar>(cfg: &EbmConfig<T>, temperature: Vec<T>, seed: Option<u64>) -> EbmRealization<T> {
    let response = temperature.iter().map(|&t| response_g(cfg, t)).collect();
    EbmRealization { years: cfg.times(), emissions: cfg.emission_series(), temperature, response, seed }
}

/// One noisy realization driven by a deterministic normal stream keyed by `seed`.
pub fn simulate_realization<T: Scalar>(cfg: &EbmConfig<T>, seed: u64) -> Result<EbmRealization<T>> {
    cfg.validate()?;
    let mut rng = seed::rng(seed);
    let scale = cfg.sigma * cfg.dt.sqrt();
    let temperature = integrate(cfg, || {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * T::lit(z)
    });
    Ok(finish(cfg, temperature, Some(seed)))
}

/// The noise-free emission-forced trajectory.
pub fn forced_signal<T: Scalar>(cfg: &EbmConfig<T>) -> Result<EbmRealization<T>> {
    cfg.validate()?;
    let temperature = integrate(cfg, T::zero);
    Ok(finish(cfg, temperature, None))
}

/// Where the members of an ensemble-mean training set come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemberPool {
    /// Fresh seeds for every `(n, k, m)`, i.e. drawing with replacement from
    /// an infinite ensemble.
    Unbounded,
    /// A finite ensemble of `N` members; draw `k` picks `n` distinct members.
    Finite(usize),
}

/// Seed of member `m` in draw `k` of an `n`-member set (unbounded pool).
pub fn member_seed(base_seed: u64, n: usize, k: usize, m: usize) -> u64 {
    seed::derive(base_seed, Stream::Member, &[n as u64, k as u64, m as u64])
}

/// Seed of member `id` (1-based) of a finite pool.
pub fn pool_member_seed(base_seed: u64, id: usize) -> u64 {
    seed::derive(base_seed, Stream::Member, &[u64::MAX, id as u64])
}

/// Seeds of the members averaged into training set `(n, k)`.
pub fn training_set_seeds(base_seed: u64, n: usize, k: usize, pool: MemberPool) -> Result<Vec<u64>> {
    if n == 0 {
        return domain("ensemble mean needs at least one member");
    }
    match pool {
        MemberPool::Unbounded => Ok((0..n).map(|m| member_seed(base_seed, n, k, m)).collect()),
        MemberPool::Finite(pool_size) => {
            let draw = crate::dataset::draw_subset(pool_size, n, k, base_seed)?;
            Ok(draw.member_ids.iter().map(|&id| pool_member_seed(base_seed, id)).collect())
        }
    }
}

/// Running mean that returns a value exactly when all inputs are equal.
pub(crate) fn accumulate_mean<T: Scalar>(acc: &mut [T], x: &[T], count: usize) {
    let c = T::from_usize_lossy(count);
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += (v - *a) / c;
    }
}

/// Ensemble-mean response series `y_{t,n,k}` of `n` members.
pub fn ensemble_mean_training_set<T: Scalar>(
    cfg: &EbmConfig<T>,
    n: usize,
    k: usize,
    base_seed: u64,
    pool: MemberPool,
) -> Result<Vec<T>> {
    let seeds = training_set_seeds(base_seed, n, k, pool)?;
    let mut mean = vec![T::zero(); cfg.n_steps()];
    for (i, s) in seeds.into_iter().enumerate() {
        let r = simulate_realization(cfg, s)?;
        accumulate_mean(&mut mean, &r.response, i + 1);
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> EbmConfig<f64> {
        EbmConfig::default()
    }

    #[test]
    fn emission_curve_values() {
        let c = cfg();
        assert!(emission_at(&c, 250.0 - 1e-9).unwrap() > 4999.999);
        let mut wide = c.clone();
        wide.t_max = 400.0;
        assert_eq!(emission_at(&wide, 250.0).unwrap(), 5000.0);
        assert_relative_eq!(emission_at(&wide, 300.0).unwrap(), 3032.653_298_563_167, max_relative = 1e-12);
        assert_relative_eq!(emission_at(&c, 0.0).unwrap(), 5000.0 * (-12.5f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn emission_outside_range_is_a_domain_error() {
        let c = cfg();
        assert!(matches!(emission_at(&c, 250.0), Err(Error::Domain(_))));
        assert!(matches!(emission_at(&c, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn response_values() {
        let c = cfg();
        assert_eq!(response_g(&c, 0.0), 0.0);
        assert_relative_eq!(response_g(&c, 1.0), 0.48, max_relative = 1e-15);
        assert_relative_eq!(response_g(&c, 2.0), 1.92, max_relative = 1e-15);
    }

    #[test]
    fn zero_forcing_stays_at_zero() {
        let mut c = cfg();
        c.sigma = 0.0;
        c.emissions = Emissions::Constant { value: 0.0 };
        let r = simulate_realization(&c, 3).unwrap();
        assert!(r.temperature.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn homogeneous_decay_is_geometric() {
        let mut c = cfg();
        c.sigma = 0.0;
        c.r = 0.0;
        c.t_init = 1.0;
        let a = c.damping_per_step();
        let r = forced_signal(&c).unwrap();
        for (t, &v) in r.temperature.iter().enumerate() {
            assert_relative_eq!(v, (1.0 - a).powi(t as i32), max_relative = 1e-12);
        }
    }

    #[test]
    fn forced_signal_matches_zero_noise_realization() {
        let mut c = cfg();
        let f = forced_signal(&c).unwrap();
        assert_eq!(f.temperature[0], 0.0);
        assert!(f.temperature.iter().all(|&t| t >= 0.0));
        c.sigma = 0.0;
        let r = simulate_realization(&c, 99).unwrap();
        assert_eq!(r.temperature, f.temperature);
        assert_eq!(r.response, f.response);
    }

    #[test]
    fn same_seed_same_path() {
        let c = cfg();
        let a = simulate_realization(&c, 42).unwrap();
        let b = simulate_realization(&c, 42).unwrap();
        let d = simulate_realization(&c, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.temperature, d.temperature);
        assert_eq!(a.len(), 250);
        for (y, t) in a.response.iter().zip(&a.temperature) {
            assert_eq!(*y, 0.03 * (4.0 * t) * (4.0 * t));
        }
    }

    #[test]
    fn one_member_mean_is_that_member() {
        let c = cfg();
        let mean = ensemble_mean_training_set(&c, 1, 5, 11, MemberPool::Unbounded).unwrap();
        let r = simulate_realization(&c, member_seed(11, 1, 5, 0)).unwrap();
        assert_eq!(mean, r.response);
        assert!(ensemble_mean_training_set(&c, 0, 0, 11, MemberPool::Unbounded).is_err());
    }

    #[test]
    fn noise_free_mean_is_forced_signal() {
        let mut c = cfg();
        c.sigma = 0.0;
        let f = forced_signal(&c).unwrap();
        for n in [1, 3, 7] {
            let m = ensemble_mean_training_set(&c, n, 2, 5, MemberPool::Unbounded).unwrap();
            assert_eq!(m, f.response);
            let m = ensemble_mean_training_set(&c, n, 2, 5, MemberPool::Finite(10)).unwrap();
            assert_eq!(m, f.response);
        }
    }

    #[test]
    fn temperature_equation_is_linear_in_forcing() {
        let base = {
            let mut c = cfg();
            c.sigma = 0.0;
            c
        };
        let xa: Vec<f64> = (0..250).map(|t| 10.0 * t as f64).collect();
        let xb: Vec<f64> = (0..250).map(|t| 3000.0 * (t as f64 / 40.0).sin().abs()).collect();
        let run = |x: Vec<f64>| {
            let mut c = base.clone();
            c.emissions = Emissions::Series { values: x };
            forced_signal(&c).unwrap().temperature
        };
        let ta = run(xa.clone());
        let tb = run(xb.clone());
        let tab = run(xa.iter().zip(&xb).map(|(a, b)| a + b).collect());
        for i in 0..250 {
            assert_relative_eq!(tab[i], ta[i] + tb[i], epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = cfg();
        c.lambda = 0.5;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.sigma = -1.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.t_max = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let f = forced_signal(&cfg()).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,X_t,T_t,y_t"));
        assert_eq!(lines.count(), 250);
    }

    #[test]
    fn single_precision_runs() {
        let c = EbmConfig::<f32>::default();
        let f = forced_signal(&c).unwrap();
        let d = forced_signal(&cfg()).unwrap();
        assert!((f.temperature[249] as f64 - d.temperature[249]).abs() < 1e-4);
    }
}
