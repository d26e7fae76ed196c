use super::layers::{AvgPool2, BatchNorm, Conv2d, Dense, GlobalAvgPool, Layer, Lstm, Param, Relu};
use super::tensor::Tensor;
use crate::error::{shape, Error, Result};
use crate::scalar::Scalar;
use crate::seed::{self, Stream};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { n_in: usize, n_out: usize },
    Conv2d { in_channels: usize, out_channels: usize },
    AvgPool2,
    GlobalAvgPool,
    Lstm { n_in: usize, hidden: usize, relu: bool },
    BatchNorm { features: usize },
    Relu,
}

/// Architecture plus the seed that determines its initial parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Shape of one sample, without the batch axis.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub init_seed: u64,
}

impl NetworkSpec {
    /// Fully connected regressor: `Dense → BatchNorm → ReLU` per hidden
    /// layer, then a linear output layer.
    pub fn mlp(n_in: usize, hidden: &[usize], n_out: usize, init_seed: u64) -> Self {
        let mut layers = Vec::new();
        let mut prev = n_in;
        for &h in hidden {
            layers.push(LayerSpec::Dense { n_in: prev, n_out: h });
            layers.push(LayerSpec::BatchNorm { features: h });
            layers.push(LayerSpec::Relu);
            prev = h;
        }
        layers.push(LayerSpec::Dense { n_in: prev, n_out });
        Self { input_shape: vec![n_in], layers, init_seed }
    }

    /// Per-frame convolutional encoder, LSTM over the window, dense decoder
    /// onto the full grid. Input `[steps, channels, lat, lon]`, output
    /// `[lat * lon]`.
    pub fn cnn_lstm(
        steps: usize,
        channels: usize,
        grid: (usize, usize),
        filters: usize,
        hidden: usize,
        init_seed: u64,
    ) -> Self {
        let (ni, nj) = grid;
        Self {
            input_shape: vec![steps, channels, ni, nj],
            layers: vec![
                LayerSpec::Conv2d { in_channels: channels, out_channels: filters },
                LayerSpec::Relu,
                LayerSpec::AvgPool2,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Lstm { n_in: filters, hidden, relu: true },
                LayerSpec::Dense { n_in: hidden, n_out: ni * nj },
            ],
            init_seed,
        }
    }
}

/// A sequential network.
pub struct Network<T: Scalar> {
    spec: NetworkSpec,
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Clone for Network<T> {
    fn clone(&self) -> Self {
        Self { spec: self.spec.clone(), layers: self.layers.iter().map(|l| l.box_clone()).collect() }
    }
}

impl<T: Scalar> std::fmt::Debug for Network<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network").field("spec", &self.spec).field("n_params", &self.n_params()).finish()
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let mut layers: Vec<Box<dyn Layer<T>>> = Vec::with_capacity(spec.layers.len());
        let mut s = std::iter::once(1).chain(spec.input_shape.iter().copied()).collect::<Vec<_>>();
        for (idx, ls) in spec.layers.iter().enumerate() {
            let mut rng = seed::rng(seed::derive(spec.init_seed, Stream::Init, &[idx as u64]));
            let layer: Box<dyn Layer<T>> = match *ls {
                LayerSpec::Dense { n_in, n_out } => Box::new(Dense::new(n_in, n_out, &mut rng)),
                LayerSpec::Conv2d { in_channels, out_channels } => {
                    Box::new(Conv2d::new(in_channels, out_channels, &mut rng))
                }
                LayerSpec::AvgPool2 => Box::new(AvgPool2::default()),
                LayerSpec::GlobalAvgPool => Box::new(GlobalAvgPool::default()),
                LayerSpec::Lstm { n_in, hidden, relu } => Box::new(Lstm::new(n_in, hidden, relu, &mut rng)),
                LayerSpec::BatchNorm { features } => Box::new(BatchNorm::new(features)),
                LayerSpec::Relu => Box::new(Relu::default()),
            };
            s = layer.output_shape(&s).map_err(|e| Error::Shape(format!("layer {idx} ({}): {e}", layer.kind())))?;
            layers.push(layer);
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Shape of one output sample.
    pub fn output_shape(&self) -> Vec<usize> {
        let mut s = std::iter::once(1).chain(self.spec.input_shape.iter().copied()).collect::<Vec<_>>();
        for l in &self.layers {
            s = l.output_shape(&s).expect("validated at construction");
        }
        s[1..].to_vec()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameter count of each layer, in order.
    pub fn layer_param_counts(&self) -> Vec<(&'static str, usize)> {
        self.layers.iter().map(|l| (l.kind(), l.params().iter().map(|p| p.len()).sum())).collect()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape().len() != self.spec.input_shape.len() + 1 || x.shape()[1..] != self.spec.input_shape[..] {
            return shape(format!("network expects [batch, {:?}], got {:?}", self.spec.input_shape, x.shape()));
        }
        Ok(())
    }

    /// Forward pass recording state for `backward`. `train` selects batch
    /// statistics in batch-norm layers.
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = self.layers[0].forward(x, train)?;
        for l in &mut self.layers[1..] {
            h = l.forward(&h, train)?;
        }
        Ok(h)
    }

    /// Inference pass; safe to call concurrently on a shared network.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = self.layers[0].infer(x)?;
        for l in &self.layers[1..] {
            h = l.infer(&h)?;
        }
        Ok(h)
    }

    /// Back-propagates `grad` (gradient of the loss with respect to the last
    /// output) and accumulates parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.params().iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<T> {
        self.params().iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.n_params() {
            return shape(format!("{} values for {} parameters", values.len(), self.n_params()));
        }
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.value.copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Parameters followed by non-trainable state (batch-norm statistics).
    pub fn snapshot(&self) -> Vec<T> {
        let mut v = self.flat_params();
        for l in &self.layers {
            v.extend(l.state());
        }
        v
    }

    pub fn restore(&mut self, snap: &[T]) -> Result<()> {
        let n = self.n_params();
        let state_len: usize = self.layers.iter().map(|l| l.state().len()).sum();
        if snap.len() != n + state_len {
            return shape(format!("snapshot has {} values, expected {}", snap.len(), n + state_len));
        }
        self.set_flat_params(&snap[..n])?;
        let mut off = n;
        for l in &mut self.layers {
            let k = l.state().len();
            if k > 0 {
                l.set_state(&snap[off..off + k]);
                off += k;
            }
        }
        Ok(())
    }

    /// On/off pattern of every ReLU-type unit in the last recorded forward pass.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut v = Vec::new();
        for l in &self.layers {
            l.kink_pattern(&mut v);
        }
        v
    }

    /// Saves `spec.json` and a flat little-endian `f64` payload `params.f64`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&self.spec)?)?;
        let mut bytes = Vec::new();
        for v in self.snapshot() {
            bytes.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        fs::write(dir.join("params.f64"), bytes)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec: NetworkSpec = serde_json::from_str(&fs::read_to_string(dir.join("spec.json"))?)?;
        let mut net = Network::new(spec)?;
        let bytes = fs::read(dir.join("params.f64"))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format("parameter payload is not a whole number of f64".into()));
        }
        let vals: Vec<T> =
            bytes.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes")))).collect();
        net.restore(&vals)?;
        Ok(net)
    }
}
