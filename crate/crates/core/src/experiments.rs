//! The internal-variability sweep: fit emulators on ensemble means of
//! random member subsets and score them against the full-ensemble mean.

use crate::dataset::{
    draw_subset, ensemble_mean, Collection, EntryRole, GriddedEnsemble, ScenarioInputs, SplitSpec, SubsetDraw,
};
use crate::emulators::{cnnlstm_fit, lps_fit, CnnLstmConfig, GriddedEmulator, ScenarioSeries, Technique};
use crate::error::{domain, shape, Error, Result};
use crate::metrics::{self, LatWeights, Scores};
use crate::nnkit::StoppingRole;
use crate::seed::{self, Stream};
use crate::stats::Line;
use crate::synthgrid::{SynthGrid, CO2_RATE};
use ndarray::{s, Array3, ArrayView3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile `{s}` (expected desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RmseSpatial,
    RmseGlobal,
    NrmseSpatial,
    NrmseGlobal,
    NrmseTotal,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::RmseSpatial => "rmse_spatial",
            Metric::RmseGlobal => "rmse_global",
            Metric::NrmseSpatial => "nrmse_spatial",
            Metric::NrmseGlobal => "nrmse_global",
            Metric::NrmseTotal => "nrmse_total",
        }
    }

    fn pick(self, s: &Scores) -> Option<f64> {
        match self {
            Metric::RmseSpatial => Some(s.rmse_spatial),
            Metric::RmseGlobal => Some(s.rmse_global),
            Metric::NrmseSpatial => s.nrmse_spatial,
            Metric::NrmseGlobal => s.nrmse_global,
            Metric::NrmseTotal => s.nrmse_total,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Metric::RmseSpatial, Metric::RmseGlobal, Metric::NrmseSpatial, Metric::NrmseGlobal, Metric::NrmseTotal]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvSweepConfig {
    pub lps_n_grid: Vec<usize>,
    pub nn_n_grid: Vec<usize>,
    /// Subset draws per `n`.
    pub k_draws: usize,
    /// Weight-initialization seeds per subset (neural techniques only).
    pub l_seeds: usize,
    pub base_seed: u64,
    pub variable: String,
    pub metrics: Vec<Metric>,
    pub cnn: CnnLstmConfig,
}

fn nn_default_grid() -> Vec<usize> {
    (1..=16).chain([20, 25, 30, 40, 50]).collect()
}

impl IvSweepConfig {
    /// `K = L = 5`, a reduced CNN-LSTM and a 30-epoch cap.
    pub fn desk(variable: impl Into<String>) -> Self {
        let mut cnn = CnnLstmConfig::new(vec![crate::dataset::CO2_CUM.into(), CO2_RATE.into()]);
        cnn.filters = 8;
        cnn.optimizer.max_epochs = 30;
        cnn.optimizer.patience = Some(5);
        Self {
            lps_n_grid: (1..=50).collect(),
            nn_n_grid: nn_default_grid(),
            k_draws: 5,
            l_seeds: 5,
            base_seed: seed::DEFAULT_BASE_SEED,
            variable: variable.into(),
            metrics: vec![Metric::RmseSpatial, Metric::RmseGlobal],
            cnn,
        }
    }

    /// `K = L = 20` and the full-size CNN-LSTM.
    pub fn paper(variable: impl Into<String>) -> Self {
        let mut cnn = CnnLstmConfig::new(vec![crate::dataset::CO2_CUM.into(), CO2_RATE.into()]);
        cnn.optimizer.max_epochs = 100;
        cnn.optimizer.patience = Some(10);
        Self { k_draws: 20, l_seeds: 20, cnn, ..Self::desk(variable) }
    }

    pub fn profile(profile: Profile, variable: impl Into<String>) -> Self {
        match profile {
            Profile::Desk => Self::desk(variable),
            Profile::Paper => Self::paper(variable),
        }
    }

    pub fn n_grid(&self, technique: Technique) -> &[usize] {
        if technique.is_neural() {
            &self.nn_n_grid
        } else {
            &self.lps_n_grid
        }
    }

    /// Checks the settings a sweep of `technique` reads.
    pub fn validate(&self, technique: Technique, n_members: usize) -> Result<()> {
        if self.k_draws == 0 || self.l_seeds == 0 {
            return Err(Error::Config("K and L must be at least 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("no metrics requested".into()));
        }
        if self.n_grid(technique).is_empty() {
            return Err(Error::Config(format!("empty subset-size grid for {technique}")));
        }
        for &n in self.n_grid(technique) {
            if n == 0 || n > n_members {
                return domain(format!("subset size {n} must lie in 1..={n_members}"));
            }
        }
        if technique.is_neural() {
            self.cnn.validate()?;
        }
        Ok(())
    }
}

/// One training scenario: forcing plus the target and temperature ensembles.
#[derive(Debug, Clone)]
pub struct TrainScenario {
    /// Forcing for the scenario years, with any history prepended.
    pub inputs: ScenarioInputs,
    pub target: GriddedEnsemble,
    pub temperature: GriddedEnsemble,
}

/// Everything a sweep reads: training scenarios, the test scenario, and
/// the evaluation window.
#[derive(Debug, Clone)]
pub struct IvDataset {
    pub variable: String,
    pub split: SplitSpec,
    pub train: Vec<TrainScenario>,
    pub test_inputs: ScenarioInputs,
    pub test_target: GriddedEnsemble,
    pub weights: LatWeights<f64>,
}

impl IvDataset {
    pub fn n_members(&self) -> usize {
        self.train
            .iter()
            .map(|t| t.target.n_members().min(t.temperature.n_members()))
            .chain(std::iter::once(self.test_target.n_members()))
            .min()
            .unwrap_or(0)
    }

    fn check(&self) -> Result<()> {
        if self.train.is_empty() {
            return domain("no training scenarios");
        }
        let grid = self.test_target.grid_shape();
        for t in &self.train {
            if t.target.grid_shape() != grid || t.temperature.grid_shape() != grid {
                return shape(format!("scenario `{}` grid differs from the test grid", t.target.scenario));
            }
            if t.target.years != t.temperature.years {
                return shape(format!("scenario `{}` target and temperature years differ", t.target.scenario));
            }
        }
        self.split.validate(&self.test_target.years)
    }

    pub fn from_synthgrid(grid: &SynthGrid, variable: &str) -> Result<Self> {
        let split = grid.split();
        let temp = &grid.config.temperature_variable;
        let train = split
            .train_scenarios
            .iter()
            .map(|s| {
                Ok(TrainScenario {
                    inputs: grid.scenario(s)?.inputs.clone(),
                    target: grid.ensemble(variable, s)?.clone(),
                    temperature: grid.ensemble(temp, s)?.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let test = grid.scenario(&split.test_scenario)?;
        let test_target = grid.ensemble(variable, &split.test_scenario)?.clone();
        let ds = Self {
            variable: variable.to_string(),
            weights: LatWeights::from_degrees(&test_target.lats),
            split,
            train,
            test_inputs: test.inputs.clone(),
            test_target,
        };
        ds.check()?;
        Ok(ds)
    }

    /// Loads a variable from a collection. With a history scenario, its
    /// forcing is prepended to every scenario's inputs.
    pub fn from_collection(col: &Collection, variable: &str) -> Result<Self> {
        let history = match &col.history_scenario {
            Some(h) => Some(col.load(&col.temperature_variable, h, EntryRole::Ensemble)?.1),
            None => None,
        };
        let with_history = |inputs: ScenarioInputs| match &history {
            Some(h) => ScenarioInputs::concat(h, &inputs),
            None => Ok(inputs),
        };
        let mut train = Vec::new();
        for s in &col.split.train_scenarios {
            let (target, inputs) = col.load(variable, s, EntryRole::Ensemble)?;
            let (temperature, _) = col.load(&col.temperature_variable, s, EntryRole::Ensemble)?;
            train.push(TrainScenario { inputs: with_history(inputs)?, target, temperature });
        }
        let (test_target, test_inputs) = col.load(variable, &col.split.test_scenario, EntryRole::Ensemble)?;
        let ds = Self {
            variable: variable.to_string(),
            split: col.split.clone(),
            weights: LatWeights::from_degrees(&test_target.lats),
            train,
            test_inputs: with_history(test_inputs)?,
            test_target,
        };
        ds.check()?;
        Ok(ds)
    }

    /// `[first, last]` indices of the test window on the test target's year axis.
    fn test_range(&self) -> Result<(usize, usize)> {
        let first = *self.split.test_years.iter().min().expect("validated non-empty");
        let last = *self.split.test_years.iter().max().expect("validated non-empty");
        let a = self.test_target.year_index(first);
        let b = self.test_target.year_index(last);
        a.zip(b).ok_or_else(|| Error::Domain("test window outside the test scenario".into()))
    }

    /// Full-ensemble mean of the test target over the test window.
    pub fn test_reference(&self) -> Result<Array3<f64>> {
        let (a, b) = self.test_range()?;
        Ok(self.test_target.full_mean().slice(s![a..=b, .., ..]).to_owned())
    }

    /// Scores a `[year, lat, lon]` prediction covering the test inputs'
    /// years (history included) against `reference`.
    pub fn score(&self, prediction: ArrayView3<f64>, reference: ArrayView3<f64>) -> Result<Scores> {
        let (a, b) = self.test_range()?;
        let offset = prediction.dim().0.checked_sub(self.test_target.n_years()).ok_or_else(|| {
            Error::Shape(format!(
                "prediction has {} years, test target {}",
                prediction.dim().0,
                self.test_target.n_years()
            ))
        })?;
        let window = prediction.slice(s![offset + a..=offset + b, .., ..]);
        Scores::compute(window, reference, &self.weights)
    }

    /// Per-scenario `(target mean, global-mean temperature)` of a subset.
    fn subset_means(&self, subset: &SubsetDraw) -> Result<Vec<(Array3<f64>, Vec<f64>)>> {
        self.train
            .iter()
            .map(|t| {
                let target = ensemble_mean(&t.target, subset)?;
                let temp = ensemble_mean(&t.temperature, subset)?;
                Ok((target, self.weights.global_series(temp.view())))
            })
            .collect()
    }

    /// Fits one emulator on the ensemble means of `subset`.
    pub fn fit(
        &self,
        technique: Technique,
        subset: &SubsetDraw,
        cnn: &CnnLstmConfig,
        seed: u64,
    ) -> Result<Box<dyn GriddedEmulator>> {
        let means = self.subset_means(subset)?;
        match technique {
            Technique::Lps => {
                let inputs: Vec<ScenarioInputs> =
                    self.train.iter().map(|t| own_years(&t.inputs, &t.target)).collect::<Result<_>>()?;
                let targets: Vec<ArrayView3<f64>> = means.iter().map(|(m, _)| m.view()).collect();
                let temps: Vec<Vec<f64>> = means.iter().map(|(_, g)| g.clone()).collect();
                Ok(Box::new(lps_fit(&inputs, &targets, &temps)?))
            }
            Technique::CnnLstm => {
                let series: Vec<ScenarioSeries<'_>> = self
                    .train
                    .iter()
                    .zip(&means)
                    .map(|(t, (m, _))| ScenarioSeries { inputs: &t.inputs, targets: m.view() })
                    .collect();
                let test_mean;
                let test = if cnn.optimizer.stopping == StoppingRole::Test {
                    test_mean = self.test_target.full_mean();
                    Some(ScenarioSeries { inputs: &self.test_inputs, targets: test_mean.view() })
                } else {
                    None
                };
                Ok(Box::new(cnnlstm_fit(&series, test, cnn, seed)?))
            }
            other => Err(Error::Config(format!("technique `{other}` is not a gridded emulator"))),
        }
    }
}

/// The scenario's own years of `inputs`, dropping prepended history.
fn own_years(inputs: &ScenarioInputs, target: &GriddedEnsemble) -> Result<ScenarioInputs> {
    match (target.years.first(), target.years.last()) {
        (Some(&a), Some(&b)) if inputs.years.len() != target.years.len() => inputs.slice_years(a, b),
        _ => Ok(inputs.clone()),
    }
}

/// Draw column of a result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DrawTag {
    Draw(usize),
    /// Aggregate over draws.
    All,
}

/// Seed column of a result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeedTag {
    Seed(usize),
    Mean,
    Std,
}

impl fmt::Display for DrawTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DrawTag::Draw(k) => write!(f, "{k}"),
            DrawTag::All => f.write_str("all"),
        }
    }
}

impl fmt::Display for SeedTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeedTag::Seed(l) => write!(f, "{l}"),
            SeedTag::Mean => f.write_str("mean"),
            SeedTag::Std => f.write_str("std"),
        }
    }
}

fn parse_draw(s: &str) -> Result<DrawTag> {
    match s {
        "all" => Ok(DrawTag::All),
        _ => s.parse().map(DrawTag::Draw).map_err(|_| Error::Format(format!("bad k `{s}`"))),
    }
}

fn parse_seed(s: &str) -> Result<SeedTag> {
    match s {
        "mean" => Ok(SeedTag::Mean),
        "std" => Ok(SeedTag::Std),
        _ => s.parse().map(SeedTag::Seed).map_err(|_| Error::Format(format!("bad l_or_mean `{s}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub technique: Technique,
    pub metric: Metric,
    pub n: usize,
    pub k: DrawTag,
    pub l_or_mean: SeedTag,
    pub value: f64,
}

/// Result rows of a sweep.
///
/// Per-fit rows carry a numeric `k` and, for neural techniques, a numeric
/// seed index. `l_or_mean = mean` with numeric `k` is the seed average of
/// one draw (the fit itself for closed-form techniques). `k = all` rows
/// hold the mean and standard deviation over draws of those values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

pub const EXPERIMENT_HEADER: [&str; 6] = ["technique", "metric", "n", "k", "l_or_mean", "value"];

impl ExperimentTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(EXPERIMENT_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.technique.to_string(),
                r.metric.to_string(),
                r.n.to_string(),
                r.k.to_string(),
                r.l_or_mean.to_string(),
                format!("{:e}", r.value),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers().map_err(csv_err)?.clone();
        if header.iter().ne(EXPERIMENT_HEADER) {
            return Err(Error::Format(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let value: f64 = rec[5].parse().map_err(|_| Error::Format(format!("bad value `{}`", &rec[5])))?;
            rows.push(ExperimentRow {
                technique: rec[0].parse()?,
                metric: rec[1].parse()?,
                n: rec[2].parse().map_err(|_| Error::Format(format!("bad n `{}`", &rec[2])))?,
                k: parse_draw(&rec[3])?,
                l_or_mean: parse_seed(&rec[4])?,
                value,
            });
        }
        Ok(Self { rows })
    }

    /// Rows of individual fits, before any averaging.
    pub fn fit_rows(&self) -> impl Iterator<Item = &ExperimentRow> {
        self.rows.iter().filter(|r| match (r.k, r.l_or_mean) {
            (DrawTag::Draw(_), SeedTag::Seed(_)) => true,
            (DrawTag::Draw(_), SeedTag::Mean) => !r.technique.is_neural(),
            _ => false,
        })
    }

    /// Seed-averaged value for every `(n, k)` of one technique and metric.
    pub fn draw_means(&self, technique: Technique, metric: Metric) -> BTreeMap<(usize, usize), f64> {
        self.rows
            .iter()
            .filter(|r| r.technique == technique && r.metric == metric && r.l_or_mean == SeedTag::Mean)
            .filter_map(|r| match r.k {
                DrawTag::Draw(k) => Some(((r.n, k), r.value)),
                DrawTag::All => None,
            })
            .collect()
    }

    /// `(n, mean over k, std over k)` for one technique and metric.
    pub fn summary(&self, technique: Technique, metric: Metric) -> Vec<(usize, f64, f64)> {
        let mut by_n: BTreeMap<usize, (Option<f64>, Option<f64>)> = BTreeMap::new();
        for r in &self.rows {
            if r.technique != technique || r.metric != metric || r.k != DrawTag::All {
                continue;
            }
            let e = by_n.entry(r.n).or_default();
            match r.l_or_mean {
                SeedTag::Mean => e.0 = Some(r.value),
                SeedTag::Std => e.1 = Some(r.value),
                SeedTag::Seed(_) => {}
            }
        }
        by_n.into_iter().filter_map(|(n, (m, s))| Some((n, m?, s.unwrap_or(0.0)))).collect()
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Population standard deviation, the spread statistic reported over draws.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Seed of weight initialization `l` for subset `(n, k)`.
pub fn weight_seed(base_seed: u64, n: usize, k: usize, l: usize) -> u64 {
    seed::derive(base_seed, Stream::Init, &[n as u64, k as u64, l as u64])
}

/// Runs the sweep for one technique. Tasks run on the current rayon pool;
/// results do not depend on its size.
pub fn run_iv_sweep(cfg: &IvSweepConfig, data: &IvDataset, technique: Technique) -> Result<ExperimentTable> {
    let n_members = data.n_members();
    cfg.validate(technique, n_members)?;
    let reference = data.test_reference()?;
    let seeds = if technique.is_neural() { cfg.l_seeds } else { 1 };
    let tasks: Vec<(usize, usize, usize)> = cfg
        .n_grid(technique)
        .iter()
        .flat_map(|&n| (0..cfg.k_draws).flat_map(move |k| (0..seeds).map(move |l| (n, k, l))))
        .collect();
    let results = tasks
        .par_iter()
        .map(|&(n, k, l)| -> Result<Scores> {
            let subset = draw_subset(n_members, n, k, cfg.base_seed)?;
            let fit = data.fit(technique, &subset, &cfg.cnn, weight_seed(cfg.base_seed, n, k, l))?;
            let pred = fit.predict(&data.test_inputs)?;
            data.score(pred.view(), reference.view())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = ExperimentTable::default();
    for &metric in &cfg.metrics {
        let value = |s: &Scores| {
            metric.pick(s).ok_or_else(|| Error::Domain(format!("{metric} undefined: target normalizer is zero")))
        };
        for (gi, &n) in cfg.n_grid(technique).iter().enumerate() {
            let mut per_draw = Vec::with_capacity(cfg.k_draws);
            for k in 0..cfg.k_draws {
                let base = (gi * cfg.k_draws + k) * seeds;
                let vals = results[base..base + seeds].iter().map(value).collect::<Result<Vec<_>>>()?;
                if technique.is_neural() {
                    for (l, &v) in vals.iter().enumerate() {
                        table.rows.push(row(technique, metric, n, DrawTag::Draw(k), SeedTag::Seed(l), v));
                    }
                }
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                table.rows.push(row(technique, metric, n, DrawTag::Draw(k), SeedTag::Mean, m));
                per_draw.push(m);
            }
            let (m, sd) = mean_std(&per_draw);
            table.rows.push(row(technique, metric, n, DrawTag::All, SeedTag::Mean, m));
            table.rows.push(row(technique, metric, n, DrawTag::All, SeedTag::Std, sd));
        }
    }
    Ok(table)
}

fn row(technique: Technique, metric: Metric, n: usize, k: DrawTag, l: SeedTag, value: f64) -> ExperimentRow {
    ExperimentRow { technique, metric, n, k, l_or_mean: l, value }
}

/// Differences `a - b` between two techniques on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: Metric,
    pub technique_a: Technique,
    pub technique_b: Technique,
    /// `(n, k, a - b)` per draw.
    pub per_draw: Vec<(usize, usize, f64)>,
    /// `(n, mean, std)` of the differences over draws.
    pub per_n: Vec<(usize, f64, f64)>,
    pub trend: Line<f64>,
    pub trend_range: (f64, f64),
}

/// Per-draw differences of seed-averaged scores, their per-`n` statistics,
/// and the least-squares trend of the mean difference over `range`.
pub fn compare_techniques(
    table_a: &ExperimentTable,
    table_b: &ExperimentTable,
    technique_a: Technique,
    technique_b: Technique,
    metric: Metric,
    range: (f64, f64),
) -> Result<Comparison> {
    let a = table_a.draw_means(technique_a, metric);
    let b = table_b.draw_means(technique_b, metric);
    if a.is_empty() {
        return domain(format!("no {metric} rows for {technique_a}"));
    }
    let mut per_draw = Vec::with_capacity(a.len());
    for (&(n, k), &va) in &a {
        let vb =
            b.get(&(n, k)).ok_or_else(|| Error::Shape(format!("{technique_b} has no result for n = {n}, k = {k}")))?;
        per_draw.push((n, k, metrics::delta_rmse(va, *vb)));
    }
    let mut grouped: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(n, _, d) in &per_draw {
        grouped.entry(n).or_default().push(d);
    }
    let per_n: Vec<(usize, f64, f64)> = grouped
        .into_iter()
        .map(|(n, ds)| {
            let (m, s) = mean_std(&ds);
            (n, m, s)
        })
        .collect();
    let xs: Vec<f64> = per_n.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = per_n.iter().map(|p| p.1).collect();
    let trend = metrics::linear_trend(&xs, &ys, range)?;
    Ok(Comparison { metric, technique_a, technique_b, per_draw, per_n, trend, trend_range: range })
}

impl Comparison {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "n", "k", "delta"]).map_err(csv_err)?;
        for &(n, k, d) in &self.per_draw {
            w.write_record([self.metric.to_string(), n.to_string(), k.to_string(), format!("{d:e}")])
                .map_err(csv_err)?;
        }
        for &(n, m, s) in &self.per_n {
            w.write_record([self.metric.to_string(), n.to_string(), "mean".into(), format!("{m:e}")])
                .map_err(csv_err)?;
            w.write_record([self.metric.to_string(), n.to_string(), "std".into(), format!("{s:e}")])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}
