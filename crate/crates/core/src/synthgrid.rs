//! Desk-scale gridded ensembles from one independent energy-balance column
//! per grid cell.
//!
//! Feedback and noise amplitude vary with latitude as polynomials in
//! `cos φ`. Each scenario is a Gaussian emission pulse; scenarios differ in
//! peak emissions.

use crate::dataset::{Channel, Collection, EntryRole, GriddedEnsemble, ScenarioInputs, SplitSpec, CO2_CUM};
use crate::ebm::{self, EbmConfig, Emissions, SECONDS_PER_YEAR};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};
use ndarray::{Array4, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Name of the annual-emission channel.
pub const CO2_RATE: &str = "co2_rate";

/// `Σ_k c_k cos(φ)^k`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatProfile {
    pub coeffs: Vec<f64>,
}

impl LatProfile {
    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn eval(&self, lat_deg: f64) -> f64 {
        let c = lat_deg.to_radians().cos();
        self.coeffs.iter().rev().fold(0.0, |acc, &k| acc * c + k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    /// The variable is the column temperature itself.
    Linear,
    /// The variable is `g(T)`.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub units: String,
    pub mode: ResponseMode,
}

/// Column depth of every cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Depth {
    /// The depth at which feedback relaxes a column fully within one step,
    /// `h = -λ dt / (ρ_w c_w)`. Temperature then equals `-r X / λ` plus
    /// white noise, and the linear-mode variable lies inside the pattern
    /// scaling model class.
    Equilibrium,
    Meters {
        h: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Peak cumulative emissions, GtX.
    pub x_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGridConfig {
    pub n_lat: usize,
    pub n_lon: usize,
    pub n_members: usize,
    pub base_seed: u64,
    pub first_year: i32,
    pub n_years: usize,
    /// Length of the test window at the end of the test scenario.
    pub test_window: usize,
    pub train_scenarios: Vec<ScenarioSpec>,
    pub test_scenario: ScenarioSpec,
    /// Peak year of every pulse, relative to `first_year`.
    pub t_peak: f64,
    pub sigma_x: f64,
    pub r: f64,
    pub lambda: LatProfile,
    pub sigma: LatProfile,
    pub depth: Depth,
    pub g_scale: f64,
    pub g_gain: f64,
    pub variables: Vec<VariableSpec>,
    pub temperature_variable: String,
}

impl Default for SynthGridConfig {
    fn default() -> Self {
        let sc = |name: &str, x_peak: f64| ScenarioSpec { name: name.into(), x_peak };
        Self {
            n_lat: 12,
            n_lon: 24,
            n_members: 50,
            base_seed: seed::DEFAULT_BASE_SEED,
            first_year: 2015,
            n_years: 86,
            test_window: 21,
            train_scenarios: vec![
                sc("ssp119", 1500.0),
                sc("ssp126", 2500.0),
                sc("ssp370", 7500.0),
                sc("ssp585", 10000.0),
            ],
            test_scenario: sc("ssp245", 5000.0),
            t_peak: 85.0,
            sigma_x: 50.0,
            r: 0.0008,
            // Weaker feedback towards the poles gives polar amplification.
            lambda: LatProfile { coeffs: vec![-1.2, 0.0, -1.3] },
            sigma: LatProfile { coeffs: vec![0.6, 0.0, 0.4] },
            depth: Depth::Equilibrium,
            g_scale: 0.03,
            g_gain: 1.0,
            variables: vec![
                VariableSpec { name: "tas".into(), units: "K".into(), mode: ResponseMode::Linear },
                VariableSpec { name: "pr".into(), units: "mm/day".into(), mode: ResponseMode::Quadratic },
            ],
            temperature_variable: "tas".into(),
        }
    }
}

/// Cell-centred latitudes from south to north.
pub fn grid_lats(n_lat: usize) -> Vec<f64> {
    let d = 180.0 / n_lat as f64;
    (0..n_lat).map(|i| -90.0 + d * (i as f64 + 0.5)).collect()
}

pub fn grid_lons(n_lon: usize) -> Vec<f64> {
    let d = 360.0 / n_lon as f64;
    (0..n_lon).map(|j| d * (j as f64 + 0.5)).collect()
}

fn name_key(name: &str) -> u64 {
    let parts: Vec<u64> = name.bytes().map(u64::from).collect();
    seed::mix(name.len() as u64, &parts)
}

impl SynthGridConfig {
    pub fn scenarios(&self) -> impl Iterator<Item = &ScenarioSpec> {
        self.train_scenarios.iter().chain(std::iter::once(&self.test_scenario))
    }

    pub fn years(&self) -> Vec<i32> {
        (0..self.n_years as i32).map(|t| self.first_year + t).collect()
    }

    pub fn split(&self) -> SplitSpec {
        let years = self.years();
        SplitSpec {
            train_scenarios: self.train_scenarios.iter().map(|s| s.name.clone()).collect(),
            test_scenario: self.test_scenario.name.clone(),
            test_years: years[years.len().saturating_sub(self.test_window)..].to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_lat == 0 || self.n_lon == 0 {
            return bad("grid must have at least one cell".into());
        }
        if self.n_members == 0 {
            return bad("at least one member is required".into());
        }
        if self.test_window == 0 || self.test_window > self.n_years {
            return bad(format!("test window {} does not fit {} years", self.test_window, self.n_years));
        }
        if self.variables.is_empty() {
            return bad("no variables configured".into());
        }
        if !self.variables.iter().any(|v| v.name == self.temperature_variable && v.mode == ResponseMode::Linear) {
            return bad(format!("temperature variable `{}` must be a linear-mode variable", self.temperature_variable));
        }
        let mut names: Vec<&str> = self.scenarios().map(|s| s.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.train_scenarios.len() + 1 {
            return bad("scenario names must be unique".into());
        }
        if self.train_scenarios.is_empty() {
            return bad("no train scenarios".into());
        }
        let lats = grid_lats(self.n_lat);
        for s in self.scenarios() {
            for &lat in &lats {
                self.cell_config(s, lat).validate()?;
            }
        }
        self.split().validate(&self.years())
    }

    /// Energy-balance parameters of a cell at latitude `lat` (degrees).
    pub fn cell_config(&self, scenario: &ScenarioSpec, lat: f64) -> EbmConfig<f64> {
        let lambda = self.lambda.eval(lat);
        let base = EbmConfig::<f64>::default();
        let h = match self.depth {
            Depth::Equilibrium => -lambda * SECONDS_PER_YEAR / (base.rho_w * base.c_w),
            Depth::Meters { h } => h,
        };
        let mut cfg = EbmConfig {
            x_peak: scenario.x_peak,
            t_peak: self.t_peak,
            sigma_x: self.sigma_x,
            r: self.r,
            h,
            lambda,
            sigma: self.sigma.eval(lat),
            dt: 1.0,
            t0: 0.0,
            t_max: self.n_years as f64,
            g_scale: self.g_scale,
            g_gain: self.g_gain,
            emissions: Emissions::Gaussian,
            ..base
        };
        // Start in equilibrium with the first year's emissions.
        let x0 = cfg.emission_series().first().copied().unwrap_or(0.0);
        cfg.t_init = cfg.equilibrium(x0);
        cfg
    }

    /// Base seed of cell `(i, j)` in a scenario; member `m` (1-based) of
    /// that cell uses [`ebm::pool_member_seed`]`(cell_seed, m)`.
    pub fn cell_seed(&self, scenario: &str, i: usize, j: usize) -> u64 {
        seed::derive(self.base_seed, Stream::Cell, &[name_key(scenario), i as u64, j as u64])
    }

    /// Forcing channels of one scenario.
    pub fn scenario_inputs(&self, scenario: &ScenarioSpec) -> ScenarioInputs {
        let cfg = self.cell_config(scenario, 0.0);
        let x = cfg.emission_series();
        let rate: Vec<f64> = (0..x.len())
            .map(|t| match t {
                0 if x.len() > 1 => x[1] - x[0],
                0 => 0.0,
                _ => x[t] - x[t - 1],
            })
            .collect();
        ScenarioInputs {
            scenario: scenario.name.clone(),
            years: self.years(),
            channels: vec![Channel::global(CO2_CUM, "GtX", x), Channel::global(CO2_RATE, "GtX/yr", rate)],
        }
    }
}

/// All generated data of one scenario.
#[derive(Debug, Clone)]
pub struct SynthScenario {
    pub inputs: ScenarioInputs,
    /// One ensemble per configured variable, in configuration order.
    pub ensembles: Vec<GriddedEnsemble>,
    /// Noise-free forced signal per variable, as a one-member ensemble.
    pub forced: Vec<GriddedEnsemble>,
}

#[derive(Debug, Clone)]
pub struct SynthGrid {
    pub config: SynthGridConfig,
    pub scenarios: Vec<SynthScenario>,
}

impl SynthGrid {
    pub fn split(&self) -> SplitSpec {
        self.config.split()
    }

    pub fn scenario(&self, name: &str) -> Result<&SynthScenario> {
        self.scenarios
            .iter()
            .find(|s| s.inputs.scenario == name)
            .ok_or_else(|| Error::Domain(format!("no scenario `{name}`")))
    }

    fn var_index(&self, variable: &str) -> Result<usize> {
        self.config
            .variables
            .iter()
            .position(|v| v.name == variable)
            .ok_or_else(|| Error::Domain(format!("no variable `{variable}`")))
    }

    pub fn ensemble(&self, variable: &str, scenario: &str) -> Result<&GriddedEnsemble> {
        let v = self.var_index(variable)?;
        Ok(&self.scenario(scenario)?.ensembles[v])
    }

    pub fn forced(&self, variable: &str, scenario: &str) -> Result<&GriddedEnsemble> {
        let v = self.var_index(variable)?;
        Ok(&self.scenario(scenario)?.forced[v])
    }

    /// Writes every ensemble and forced signal as GED datasets plus a
    /// collection index under `root`.
    pub fn write(&self, root: impl AsRef<Path>) -> Result<Collection> {
        let mut col = Collection::new(root.as_ref(), self.split(), self.config.temperature_variable.clone());
        for s in &self.scenarios {
            for (ens, forced) in s.ensembles.iter().zip(&s.forced) {
                col.add(EntryRole::Ensemble, ens, &s.inputs)?;
                col.add(EntryRole::Forced, forced, &s.inputs)?;
            }
        }
        col.write_index()?;
        Ok(col)
    }
}

/// Runs every cell, member and scenario.
pub fn generate(cfg: &SynthGridConfig) -> Result<SynthGrid> {
    cfg.validate()?;
    let lats = grid_lats(cfg.n_lat);
    let lons = grid_lons(cfg.n_lon);
    let (ni, nj, nt, nm, nv) = (cfg.n_lat, cfg.n_lon, cfg.n_years, cfg.n_members, cfg.variables.len());
    let mut scenarios = Vec::new();
    for spec in cfg.scenarios() {
        let cells: Vec<(usize, usize)> = (0..ni).flat_map(|i| (0..nj).map(move |j| (i, j))).collect();
        // Per cell: [variable][member * nt + t] for members, then forced.
        let runs = cells
            .par_iter()
            .map(|&(i, j)| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
                let cell = cfg.cell_config(spec, lats[i]);
                let cell_seed = cfg.cell_seed(&spec.name, i, j);
                let mut members = vec![Vec::with_capacity(nm * nt); nv];
                for m in 1..=nm {
                    let run = ebm::simulate_realization(&cell, ebm::pool_member_seed(cell_seed, m))?;
                    push_variables(cfg, &run, &mut members);
                }
                let mut forced = vec![Vec::with_capacity(nt); nv];
                push_variables(cfg, &ebm::forced_signal(&cell)?, &mut forced);
                Ok((members, forced))
            })
            .collect::<Result<Vec<_>>>()?;
        let inputs = cfg.scenario_inputs(spec);
        let mut ensembles = Vec::with_capacity(nv);
        let mut forced = Vec::with_capacity(nv);
        for (v, var) in cfg.variables.iter().enumerate() {
            let mut values = Array4::<f64>::zeros((nm, nt, ni, nj));
            let mut fvalues = Array4::<f64>::zeros((1, nt, ni, nj));
            for (&(i, j), (mem, frc)) in cells.iter().zip(&runs) {
                for m in 0..nm {
                    for t in 0..nt {
                        values[[m, t, i, j]] = mem[v][m * nt + t];
                    }
                }
                for t in 0..nt {
                    fvalues[[0, t, i, j]] = frc[v][t];
                }
            }
            let make = |vals| {
                GriddedEnsemble::new(vals, &var.name, &var.units, &spec.name, cfg.years(), lats.clone(), lons.clone())
            };
            ensembles.push(make(values)?);
            forced.push(make(fvalues)?);
        }
        scenarios.push(SynthScenario { inputs, ensembles, forced });
    }
    Ok(SynthGrid { config: cfg.clone(), scenarios })
}

fn push_variables(cfg: &SynthGridConfig, run: &ebm::EbmRealization<f64>, out: &mut [Vec<f64>]) {
    for (var, dst) in cfg.variables.iter().zip(out.iter_mut()) {
        match var.mode {
            ResponseMode::Linear => dst.extend_from_slice(&run.temperature),
            ResponseMode::Quadratic => dst.extend_from_slice(&run.response),
        }
    }
}

/// Root-mean-square deviation of the members from their mean.
pub fn member_spread(ens: &GriddedEnsemble) -> f64 {
    let mean = ens.full_mean();
    let mut acc = 0.0;
    for m in ens.values.axis_iter(Axis(0)) {
        acc += (&m - &mean).mapv(|d| d * d).sum();
    }
    (acc / ens.values.len() as f64).sqrt()
}
