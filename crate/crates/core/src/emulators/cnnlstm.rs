//! Convolutional encoder, LSTM over a window of past years, dense decoder
//! onto the grid.

use crate::dataset::{ChannelData, ScenarioInputs};
use crate::error::{shape, Error, Result};
use crate::nnkit::{train, Network, NetworkSpec, OptimizerSpec, SampleSet, StoppingRole, Tensor, TrainReport};
use crate::seed::{self, Stream};
use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnLstmConfig {
    /// Years of input history per prediction, including the target year.
    pub window: usize,
    pub filters: usize,
    pub hidden: usize,
    /// Input channels, in order.
    pub channels: Vec<String>,
    pub optimizer: OptimizerSpec,
    /// With a held-out stopping set, every `held_out_every`-th training
    /// year is withheld from the gradient steps.
    pub held_out_every: usize,
}

impl CnnLstmConfig {
    pub fn new(channels: Vec<String>) -> Self {
        Self {
            window: 10,
            filters: 20,
            hidden: 25,
            channels,
            optimizer: OptimizerSpec::rmsprop_default(),
            held_out_every: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.window == 0 || self.filters == 0 || self.hidden == 0 {
            return Err(Error::Config("window, filters and hidden size must be positive".into()));
        }
        if self.channels.is_empty() {
            return Err(Error::Config("at least one input channel is required".into()));
        }
        if self.optimizer.stopping == StoppingRole::HeldOut && self.held_out_every < 2 {
            return Err(Error::Config("held_out_every must be at least 2".into()));
        }
        Ok(())
    }
}

/// Inputs and `[year, lat, lon]` targets of one scenario. The targets cover
/// the last years of `inputs`, so earlier input years (e.g. a prepended
/// historical period) serve only as window history.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioSeries<'a> {
    pub inputs: &'a ScenarioInputs,
    pub targets: ArrayView3<'a, f64>,
}

impl ScenarioSeries<'_> {
    fn offset(&self) -> Result<usize> {
        let (nt, nx) = (self.targets.dim().0, self.inputs.years.len());
        nx.checked_sub(nt).ok_or_else(|| Error::Shape(format!("{nt} target years but only {nx} input years")))
    }
}

#[derive(Debug, Clone)]
pub struct CnnLstmFit {
    pub net: Network<f64>,
    pub channels: Vec<String>,
    pub channel_mean: Vec<f64>,
    pub channel_std: Vec<f64>,
    pub window: usize,
    pub grid: (usize, usize),
    pub seed: u64,
    pub report: TrainReport,
}

/// Standardized `[year, channel, lat, lon]` frames of one scenario.
struct Frames {
    data: Vec<f64>,
    n_years: usize,
}

fn build_frames(
    inputs: &ScenarioInputs,
    channels: &[String],
    mean: &[f64],
    std: &[f64],
    grid: (usize, usize),
) -> Result<Frames> {
    let (ni, nj) = grid;
    let plane = ni * nj;
    let nc = channels.len();
    let n_years = inputs.years.len();
    let mut data = vec![0.0; n_years * nc * plane];
    for (c, name) in channels.iter().enumerate() {
        let ch = inputs.channel(name)?;
        if ch.n_years() != n_years {
            return shape(format!("channel `{name}` has {} years, expected {n_years}", ch.n_years()));
        }
        if let ChannelData::Gridded(a) = &ch.data {
            if (a.dim().1, a.dim().2) != grid {
                return shape(format!("channel `{name}` grid {:?} differs from target grid {grid:?}", a.dim()));
            }
        }
        for t in 0..n_years {
            let base = (t * nc + c) * plane;
            for i in 0..ni {
                for j in 0..nj {
                    data[base + i * nj + j] = (ch.at(t, i, j) - mean[c]) / std[c];
                }
            }
        }
    }
    Ok(Frames { data, n_years })
}

fn channel_stats(inputs: &[&ScenarioInputs], channels: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for name in channels {
        let mut values = Vec::new();
        for inp in inputs {
            match &inp.channel(name)?.data {
                ChannelData::Global(v) => values.extend_from_slice(v),
                ChannelData::Gridded(a) => values.extend(a.iter().copied()),
            }
        }
        let n = values.len().max(1) as f64;
        let m = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        means.push(m);
        stds.push(if sd > 0.0 { sd } else { 1.0 });
    }
    Ok((means, stds))
}

/// Windows ending at selected years of several scenarios.
struct WindowSet<'a> {
    frames: &'a [Frames],
    targets: Vec<ArrayView3<'a, f64>>,
    offsets: Vec<usize>,
    /// `(scenario, target year index)`
    index: Vec<(usize, usize)>,
    window: usize,
    frame_len: usize,
}

impl WindowSet<'_> {
    fn input_shape(&self, batch: usize, nc: usize, grid: (usize, usize)) -> Vec<usize> {
        vec![batch, self.window, nc, grid.0, grid.1]
    }
}

/// Copies the window ending at input year `end` into `out`, repeating the
/// first year where the window reaches before the start of the series.
fn write_window(frames: &Frames, end: usize, window: usize, frame_len: usize, out: &mut Vec<f64>) {
    debug_assert!(end < frames.n_years);
    for w in 0..window {
        let back = window - 1 - w;
        let t = end.saturating_sub(back);
        out.extend_from_slice(&frames.data[t * frame_len..(t + 1) * frame_len]);
    }
}

impl SampleSet<f64> for WindowSet<'_> {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn gather(&self, idx: &[usize]) -> Result<(Tensor<f64>, Tensor<f64>)> {
        let mut xs = Vec::with_capacity(idx.len() * self.window * self.frame_len);
        let (_, ni, nj) = self.targets[0].dim();
        let mut ys = Vec::with_capacity(idx.len() * ni * nj);
        for &k in idx {
            let (s, t) = self.index[k];
            write_window(&self.frames[s], self.offsets[s] + t, self.window, self.frame_len, &mut xs);
            ys.extend(self.targets[s].index_axis(ndarray::Axis(0), t).iter().copied());
        }
        let nc = self.frame_len / (ni * nj);
        Ok((Tensor::new(self.input_shape(idx.len(), nc, (ni, nj)), xs)?, Tensor::new(vec![idx.len(), ni * nj], ys)?))
    }
}

/// Trains one network with weight seed `seed`.
///
/// The stopping set follows `cfg.optimizer.stopping`; `test` must be given
/// when that role is [`StoppingRole::Test`].
pub fn cnnlstm_fit<'a>(
    train_data: &[ScenarioSeries<'a>],
    test: Option<ScenarioSeries<'a>>,
    cfg: &CnnLstmConfig,
    seed: u64,
) -> Result<CnnLstmFit> {
    cfg.validate()?;
    let Some(first) = train_data.first() else {
        return Err(Error::Domain("no training scenarios".into()));
    };
    let (_, ni, nj) = first.targets.dim();
    let grid = (ni, nj);
    for s in train_data.iter().chain(test.iter()) {
        let (_, a, b) = s.targets.dim();
        if (a, b) != grid {
            return shape(format!("target grid {:?} differs from {grid:?}", (a, b)));
        }
    }
    let train_inputs: Vec<&ScenarioInputs> = train_data.iter().map(|s| s.inputs).collect();
    let (channel_mean, channel_std) = channel_stats(&train_inputs, &cfg.channels)?;
    let all: Vec<ScenarioSeries<'a>> = train_data.iter().copied().chain(test).collect();
    let frames = all
        .iter()
        .map(|s| build_frames(s.inputs, &cfg.channels, &channel_mean, &channel_std, grid))
        .collect::<Result<Vec<_>>>()?;
    let offsets = all.iter().map(|s| s.offset()).collect::<Result<Vec<_>>>()?;
    let frame_len = cfg.channels.len() * ni * nj;
    let make = |index: Vec<(usize, usize)>| WindowSet {
        frames: &frames,
        targets: all.iter().map(|s| s.targets).collect(),
        offsets: offsets.clone(),
        index,
        window: cfg.window,
        frame_len,
    };
    let train_years = |keep: &dyn Fn(usize) -> bool| -> Vec<(usize, usize)> {
        (0..train_data.len())
            .flat_map(|s| (0..train_data[s].targets.dim().0).map(move |t| (s, t)))
            .filter(|&(_, t)| keep(t))
            .collect()
    };
    let every = cfg.held_out_every;
    let (train_idx, stop_idx) = match cfg.optimizer.stopping {
        StoppingRole::Train => (train_years(&|_| true), train_years(&|_| true)),
        StoppingRole::HeldOut => (train_years(&|t| t % every != every - 1), train_years(&|t| t % every == every - 1)),
        StoppingRole::Test => {
            if test.is_none() {
                return Err(Error::Config("test stopping role needs test data".into()));
            }
            let s = train_data.len();
            (train_years(&|_| true), (0..all[s].targets.dim().0).map(|t| (s, t)).collect())
        }
    };
    let spec = NetworkSpec::cnn_lstm(
        cfg.window,
        cfg.channels.len(),
        grid,
        cfg.filters,
        cfg.hidden,
        seed::derive(seed, Stream::Init, &[]),
    );
    let mut net = Network::new(spec)?;
    let report =
        train(&mut net, &cfg.optimizer, &make(train_idx), &make(stop_idx), seed::derive(seed, Stream::Shuffle, &[]))?;
    Ok(CnnLstmFit {
        net,
        channels: cfg.channels.clone(),
        channel_mean,
        channel_std,
        window: cfg.window,
        grid,
        seed,
        report,
    })
}

const PREDICT_CHUNK: usize = 32;

impl CnnLstmFit {
    /// `[year, lat, lon]` predictions for every year of `inputs`.
    pub fn predict(&self, inputs: &ScenarioInputs) -> Result<Array3<f64>> {
        let frames = build_frames(inputs, &self.channels, &self.channel_mean, &self.channel_std, self.grid)?;
        let (ni, nj) = self.grid;
        let frame_len = self.channels.len() * ni * nj;
        let n = frames.n_years;
        let mut out = Vec::with_capacity(n * ni * nj);
        let years: Vec<usize> = (0..n).collect();
        for chunk in years.chunks(PREDICT_CHUNK) {
            let mut xs = Vec::with_capacity(chunk.len() * self.window * frame_len);
            for &t in chunk {
                write_window(&frames, t, self.window, frame_len, &mut xs);
            }
            let x = Tensor::new(vec![chunk.len(), self.window, self.channels.len(), ni, nj], xs)?;
            out.extend_from_slice(self.net.predict(&x)?.data());
        }
        Array3::from_shape_vec((n, ni, nj), out).map_err(|e| Error::Shape(e.to_string()))
    }
}

pub fn cnnlstm_predict(fit: &CnnLstmFit, inputs: &ScenarioInputs) -> Result<Array3<f64>> {
    fit.predict(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_repeats_first_year() {
        let frames = Frames { data: vec![10.0, 11.0, 12.0, 13.0], n_years: 4 };
        let mut out = Vec::new();
        write_window(&frames, 1, 4, 1, &mut out);
        assert_eq!(out, vec![10.0, 10.0, 10.0, 11.0]);
        out.clear();
        write_window(&frames, 3, 2, 1, &mut out);
        assert_eq!(out, vec![12.0, 13.0]);
    }
}
