//! Gridded multi-member ensembles, scenario forcing inputs, splits and
//! ensemble subsetting.

mod collection;
mod ged;

pub use collection::{Collection, CollectionEntry, EntryRole, COLLECTION_FILE};
pub use ged::{load_ged, payload_checksums, read_manifest, save_ged, GedManifest, PayloadInfo, GED_SCHEMA_VERSION};

use crate::error::{domain, shape, Error, Result};
use crate::seed::{self, Stream};
use ndarray::{Array3, Array4, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// A `[member, year, lat, lon]` array of one variable under one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedEnsemble {
    pub values: Array4<f64>,
    pub variable: String,
    pub units: String,
    pub scenario: String,
    pub years: Vec<i32>,
    pub lats: Vec<f64>,
    pub lons: Vec<f64>,
}

impl GriddedEnsemble {
    pub fn new(
        values: Array4<f64>,
        variable: impl Into<String>,
        units: impl Into<String>,
        scenario: impl Into<String>,
        years: Vec<i32>,
        lats: Vec<f64>,
        lons: Vec<f64>,
    ) -> Result<Self> {
        let ens = Self {
            values,
            variable: variable.into(),
            units: units.into(),
            scenario: scenario.into(),
            years,
            lats,
            lons,
        };
        ens.validate()?;
        Ok(ens)
    }

    pub fn n_members(&self) -> usize {
        self.values.len_of(Axis(0))
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.lats.len(), self.lons.len())
    }

    pub fn validate(&self) -> Result<()> {
        let expect = [self.values.len_of(Axis(0)), self.years.len(), self.lats.len(), self.lons.len()];
        if self.values.shape() != expect {
            return shape(format!(
                "values shape {:?} does not match (members, years, lats, lons) = {:?}",
                self.values.shape(),
                expect
            ));
        }
        if expect[0] == 0 {
            return domain("ensemble needs at least one member");
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("ensemble contains non-finite values".into()));
        }
        check_lats(&self.lats)?;
        check_years(&self.years)
    }

    /// Index of a calendar year on the year axis.
    pub fn year_index(&self, year: i32) -> Option<usize> {
        let first = *self.years.first()?;
        let idx = usize::try_from(year - first).ok()?;
        (idx < self.years.len()).then_some(idx)
    }

    /// Mean over all members.
    pub fn full_mean(&self) -> Array3<f64> {
        self.values.mean_axis(Axis(0)).expect("non-empty member axis")
    }
}

fn check_lats(lats: &[f64]) -> Result<()> {
    if lats.iter().any(|l| !(-90.0..=90.0).contains(l)) {
        return domain("latitudes must lie in [-90, 90]");
    }
    let inc = lats.windows(2).all(|w| w[1] > w[0]);
    let dec = lats.windows(2).all(|w| w[1] < w[0]);
    if !(inc || dec) {
        return domain("latitudes must be strictly monotone");
    }
    Ok(())
}

fn check_years(years: &[i32]) -> Result<()> {
    if years.windows(2).any(|w| w[1] != w[0] + 1) {
        return domain("years must be contiguous");
    }
    Ok(())
}

/// Values of one forcing channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelData {
    /// One value per year.
    Global(Vec<f64>),
    /// A `[year, lat, lon]` map per year.
    Gridded(Array3<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub units: String,
    pub data: ChannelData,
}

impl Channel {
    pub fn global(name: impl Into<String>, units: impl Into<String>, values: Vec<f64>) -> Self {
        Self { name: name.into(), units: units.into(), data: ChannelData::Global(values) }
    }

    pub fn n_years(&self) -> usize {
        match &self.data {
            ChannelData::Global(v) => v.len(),
            ChannelData::Gridded(a) => a.len_of(Axis(0)),
        }
    }

    /// Value of the channel at `(year index, lat, lon)`; global channels are
    /// broadcast over the grid.
    #[inline]
    pub fn at(&self, t: usize, i: usize, j: usize) -> f64 {
        match &self.data {
            ChannelData::Global(v) => v[t],
            ChannelData::Gridded(a) => a[[t, i, j]],
        }
    }
}

/// Per-year forcing channels of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInputs {
    pub scenario: String,
    pub years: Vec<i32>,
    pub channels: Vec<Channel>,
}

/// Name of the cumulative-CO2 channel used by pattern scaling.
pub const CO2_CUM: &str = "co2_cum";

impl ScenarioInputs {
    pub fn channel(&self, name: &str) -> Result<&Channel> {
        self.channels.iter().find(|c| c.name == name).ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    pub fn global_series(&self, name: &str) -> Result<&[f64]> {
        match &self.channel(name)?.data {
            ChannelData::Global(v) => Ok(v),
            ChannelData::Gridded(_) => Err(Error::Shape(format!("channel `{name}` is gridded, not global"))),
        }
    }

    pub fn validate(&self, grid: Option<(usize, usize)>) -> Result<()> {
        check_years(&self.years)?;
        let mut names = BTreeSet::new();
        for c in &self.channels {
            if !names.insert(c.name.as_str()) {
                return domain(format!("duplicate channel `{}`", c.name));
            }
            if c.n_years() != self.years.len() {
                return shape(format!(
                    "channel `{}` has {} years, scenario has {}",
                    c.name,
                    c.n_years(),
                    self.years.len()
                ));
            }
            let finite = match &c.data {
                ChannelData::Global(v) => v.iter().all(|x| x.is_finite()),
                ChannelData::Gridded(a) => a.iter().all(|x| x.is_finite()),
            };
            if !finite {
                return Err(Error::Format(format!("channel `{}` has non-finite values", c.name)));
            }
            if let (ChannelData::Gridded(a), Some((ni, nj))) = (&c.data, grid) {
                if a.len_of(Axis(1)) != ni || a.len_of(Axis(2)) != nj {
                    return shape(format!("channel `{}` grid differs from target grid", c.name));
                }
            }
        }
        Ok(())
    }

    /// Prepends `history` along the year axis (e.g. historical before an SSP).
    pub fn concat(history: &ScenarioInputs, future: &ScenarioInputs) -> Result<ScenarioInputs> {
        if let (Some(&a), Some(&b)) = (history.years.last(), future.years.first()) {
            if b != a + 1 {
                return domain(format!("cannot join years ending {a} with years starting {b}"));
            }
        }
        let mut channels = Vec::with_capacity(future.channels.len());
        for c in &future.channels {
            let h = history.channel(&c.name)?;
            let data = match (&h.data, &c.data) {
                (ChannelData::Global(a), ChannelData::Global(b)) => {
                    ChannelData::Global(a.iter().chain(b).copied().collect())
                }
                (ChannelData::Gridded(a), ChannelData::Gridded(b)) => ChannelData::Gridded(
                    ndarray::concatenate(Axis(0), &[a.view(), b.view()]).map_err(|e| Error::Shape(e.to_string()))?,
                ),
                _ => return shape(format!("channel `{}` kind differs between scenarios", c.name)),
            };
            channels.push(Channel { name: c.name.clone(), units: c.units.clone(), data });
        }
        Ok(ScenarioInputs {
            scenario: future.scenario.clone(),
            years: history.years.iter().chain(&future.years).copied().collect(),
            channels,
        })
    }

    /// Restricts every channel to the year range `[first, last]`.
    pub fn slice_years(&self, first: i32, last: i32) -> Result<ScenarioInputs> {
        let start = self.years.iter().position(|&y| y == first);
        let end = self.years.iter().position(|&y| y == last);
        let (Some(s), Some(e)) = (start, end) else {
            return domain(format!("years {first}..={last} not available for `{}`", self.scenario));
        };
        let channels = self
            .channels
            .iter()
            .map(|c| Channel {
                name: c.name.clone(),
                units: c.units.clone(),
                data: match &c.data {
                    ChannelData::Global(v) => ChannelData::Global(v[s..=e].to_vec()),
                    ChannelData::Gridded(a) => ChannelData::Gridded(a.slice(ndarray::s![s..=e, .., ..]).to_owned()),
                },
            })
            .collect();
        Ok(ScenarioInputs { scenario: self.scenario.clone(), years: self.years[s..=e].to_vec(), channels })
    }
}

/// Train/test partition of scenarios and evaluation years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_scenarios: Vec<String>,
    pub test_scenario: String,
    pub test_years: Vec<i32>,
}

impl SplitSpec {
    pub fn validate(&self, test_years_available: &[i32]) -> Result<()> {
        if self.train_scenarios.contains(&self.test_scenario) {
            return domain(format!("test scenario `{}` is also a train scenario", self.test_scenario));
        }
        if self.train_scenarios.is_empty() {
            return domain("no train scenarios");
        }
        if self.test_years.is_empty() {
            return domain("empty test window");
        }
        if let Some(y) = self.test_years.iter().find(|y| !test_years_available.contains(y)) {
            return domain(format!("test year {y} not in test scenario"));
        }
        Ok(())
    }
}

/// One random subset `𝕄_{n,k}` of member ids (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetDraw {
    pub n: usize,
    pub k: usize,
    pub member_ids: Vec<usize>,
}

/// Subtracts a `[lat, lon]` climatology from every member and year.
pub fn compute_anomalies(raw: &GriddedEnsemble, climatology: ArrayView2<f64>) -> Result<GriddedEnsemble> {
    if climatology.shape() != [raw.lats.len(), raw.lons.len()] {
        return shape(format!("climatology shape {:?} differs from grid {:?}", climatology.shape(), raw.grid_shape()));
    }
    let mut out = raw.clone();
    out.values -= &climatology;
    Ok(out)
}

/// Mean over the members listed in `subset`.
pub fn ensemble_mean(ens: &GriddedEnsemble, subset: &SubsetDraw) -> Result<Array3<f64>> {
    mean_of_members(ens.values.view(), &subset.member_ids)
}

pub(crate) fn mean_of_members(values: ndarray::ArrayView4<f64>, ids: &[usize]) -> Result<Array3<f64>> {
    let n_members = values.len_of(Axis(0));
    if ids.is_empty() {
        return domain("empty member subset");
    }
    let sh = values.shape();
    let mut acc = Array3::<f64>::zeros((sh[1], sh[2], sh[3]));
    for (c, &id) in ids.iter().enumerate() {
        if id == 0 || id > n_members {
            return Err(Error::Index(format!("member id {id} not in 1..={n_members}")));
        }
        let member: ArrayView3<f64> = values.index_axis(Axis(0), id - 1);
        let cnt = (c + 1) as f64;
        ndarray::Zip::from(&mut acc).and(&member).for_each(|a, &v| *a += (v - *a) / cnt);
    }
    Ok(acc)
}

/// Draw `k` of `n`-subsets from `{1..N}` without replacement.
pub fn draw_subset(pool_size: usize, n: usize, k: usize, base_seed: u64) -> Result<SubsetDraw> {
    if n == 0 || n > pool_size {
        return domain(format!("subset size {n} must lie in 1..={pool_size}"));
    }
    let mut rng = seed::rng(seed::derive(base_seed, Stream::Subset, &[pool_size as u64, n as u64, k as u64]));
    let mut ids: Vec<usize> = rand::seq::index::sample(&mut rng, pool_size, n).into_iter().map(|i| i + 1).collect();
    ids.sort_unstable();
    Ok(SubsetDraw { n, k, member_ids: ids })
}

/// `K` uniformly random `n`-subsets of `{1..N}`, deterministic in `base_seed`.
pub fn draw_subsets(pool_size: usize, n: usize, draws: usize, base_seed: u64) -> Result<Vec<SubsetDraw>> {
    (0..draws).map(|k| draw_subset(pool_size, n, k, base_seed)).collect()
}
