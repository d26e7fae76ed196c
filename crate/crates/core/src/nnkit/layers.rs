//! Layer kernels with hand-written backward passes.
//!
//! Every layer treats all leading axes of its input as batch axes, so a
//! `[batch, time, channel, lat, lon]` tensor runs through `Conv2d`,
//! `AvgPool2` and `GlobalAvgPool` one frame at a time.

use super::tensor::Tensor;
use crate::error::{shape, Error, Result};
use crate::scalar::Scalar;
use rand::Rng;

/// Trainable parameter block with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    fn uniform<R: Rng>(n: usize, bound: f64, rng: &mut R) -> Self {
        let value = (0..n).map(|_| T::lit(rng.random_range(-bound..=bound))).collect();
        Self { value, grad: vec![T::zero(); n] }
    }

    fn filled(n: usize, v: T) -> Self {
        Self { value: vec![v; n], grad: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

pub trait Layer<T: Scalar>: Send + Sync {
    fn kind(&self) -> &'static str;

    /// Output shape for a full input shape (including batch axes).
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    /// Forward pass that records what `backward` needs.
    fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>>;

    /// Inference-mode forward pass without side effects.
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    /// Non-trainable state carried in checkpoints.
    fn state(&self) -> Vec<T> {
        Vec::new()
    }

    fn set_state(&mut self, _state: &[T]) {}

    /// Appends the on/off pattern of every piecewise-linear unit seen in the
    /// last forward pass.
    fn kink_pattern(&self, _out: &mut Vec<bool>) {}

    fn box_clone(&self) -> Box<dyn Layer<T>>;
}

fn no_cache() -> Error {
    Error::Domain("backward called before forward".into())
}

fn trailing(shape_in: &[usize], n: usize, what: &str) -> Result<usize> {
    if shape_in.len() < n + 1 {
        return shape(format!("{what} expects at least {} axes, got {shape_in:?}", n + 1));
    }
    Ok(shape_in[..shape_in.len() - n].iter().product())
}

// ---------------------------------------------------------------- Dense

#[derive(Clone)]
pub struct Dense<T> {
    pub n_in: usize,
    pub n_out: usize,
    /// `[out, in]`
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        Self {
            n_in,
            n_out,
            weight: Param::uniform(n_in * n_out, bound, rng),
            bias: Param::uniform(n_out, bound, rng),
            cache: None,
        }
    }

    fn run(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out_shape = self.output_shape(x.shape())?;
        let rows = x.len() / self.n_in;
        let (w, b, xd) = (&self.weight.value, &self.bias.value, x.data());
        let mut out = Vec::with_capacity(rows * self.n_out);
        for r in 0..rows {
            let xr = &xd[r * self.n_in..(r + 1) * self.n_in];
            for o in 0..self.n_out {
                let wr = &w[o * self.n_in..(o + 1) * self.n_in];
                let mut acc = b[o];
                for (a, c) in wr.iter().zip(xr) {
                    acc += *a * *c;
                }
                out.push(acc);
            }
        }
        Tensor::new(out_shape, out)
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.last() != Some(&self.n_in) {
            return shape(format!("dense expects trailing axis {}, got {input:?}", self.n_in));
        }
        let mut s = input.to_vec();
        *s.last_mut().unwrap() = self.n_out;
        Ok(s)
    }

    fn forward(&mut self, x: &Tensor<T>, _train: bool) -> Result<Tensor<T>> {
        let y = self.run(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or_else(no_cache)?;
        let rows = x.len() / self.n_in;
        let (xd, gd) = (x.data(), grad.data());
        let w = &self.weight.value;
        let mut dx = vec![T::zero(); x.len()];
        for r in 0..rows {
            let xr = &xd[r * self.n_in..(r + 1) * self.n_in];
            let dxr = &mut dx[r * self.n_in..(r + 1) * self.n_in];
            for o in 0..self.n_out {
                let g = gd[r * self.n_out + o];
                if g == T::zero() {
                    continue;
                }
                self.bias.grad[o] += g;
                let gw = &mut self.weight.grad[o * self.n_in..(o + 1) * self.n_in];
                let wr = &w[o * self.n_in..(o + 1) * self.n_in];
                for i in 0..self.n_in {
                    gw[i] += g * xr[i];
                    dxr[i] += g * wr[i];
                }
            }
        }
        Tensor::new(x.shape().to_vec(), dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------- Conv2d

/// 3×3 convolution, stride 1, zero "same" padding.
#[derive(Clone)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out, in, 3, 3]`
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

/// Valid index range of `y + d` for `y` in `0..n`.
#[inline]
fn span(n: usize, d: isize) -> (usize, usize) {
    let lo = if d < 0 { (-d) as usize } else { 0 };
    let hi = if d > 0 { n.saturating_sub(d as usize) } else { n };
    (lo, hi.max(lo))
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng>(in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((in_channels * 9) as f64).sqrt();
        Self {
            in_channels,
            out_channels,
            weight: Param::uniform(out_channels * in_channels * 9, bound, rng),
            bias: Param::uniform(out_channels, bound, rng),
            cache: None,
        }
    }

    fn dims(&self, s: &[usize]) -> Result<(usize, usize, usize)> {
        let frames = trailing(s, 3, "conv2d")?;
        let n = s.len();
        if s[n - 3] != self.in_channels {
            return shape(format!("conv2d expects {} channels, got {s:?}", self.in_channels));
        }
        Ok((frames, s[n - 2], s[n - 1]))
    }

    fn run(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (frames, h, w) = self.dims(x.shape())?;
        let plane = h * w;
        let (ci, co) = (self.in_channels, self.out_channels);
        let xd = x.data();
        let wt = &self.weight.value;
        let mut out = vec![T::zero(); frames * co * plane];
        for f in 0..frames {
            let xin = &xd[f * ci * plane..(f + 1) * ci * plane];
            for o in 0..co {
                let op = &mut out[(f * co + o) * plane..(f * co + o + 1) * plane];
                op.iter_mut().for_each(|v| *v = self.bias.value[o]);
                for c in 0..ci {
                    let ip = &xin[c * plane..(c + 1) * plane];
                    for ky in 0..3 {
                        let dy = ky as isize - 1;
                        let (y0, y1) = span(h, dy);
                        for kx in 0..3 {
                            let dx = kx as isize - 1;
                            let (x0, x1) = span(w, dx);
                            let k = wt[((o * ci + c) * 3 + ky) * 3 + kx];
                            for y in y0..y1 {
                                let yi = (y as isize + dy) as usize;
                                let orow = &mut op[y * w + x0..y * w + x1];
                                let start = (yi * w) as isize + x0 as isize + dx;
                                let irow = &ip[start as usize..start as usize + (x1 - x0)];
                                for (a, b) in orow.iter_mut().zip(irow) {
                                    *a += k * *b;
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut s = x.shape().to_vec();
        let n = s.len();
        s[n - 3] = co;
        Tensor::new(s, out)
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn kind(&self) -> &'static str {
        "conv2d"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.dims(input)?;
        let mut s = input.to_vec();
        let n = s.len();
        s[n - 3] = self.out_channels;
        Ok(s)
    }

    fn forward(&mut self, x: &Tensor<T>, _train: bool) -> Result<Tensor<T>> {
        let y = self.run(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or_else(no_cache)?;
        let (frames, h, w) = self.dims(x.shape())?;
        let plane = h * w;
        let (ci, co) = (self.in_channels, self.out_channels);
        let (xd, gd) = (x.data(), grad.data());
        let wt = &self.weight.value;
        let mut dx = vec![T::zero(); x.len()];
        for f in 0..frames {
            for o in 0..co {
                let gp = &gd[(f * co + o) * plane..(f * co + o + 1) * plane];
                self.bias.grad[o] += gp.iter().copied().sum::<T>();
                for c in 0..ci {
                    let base = (f * ci + c) * plane;
                    let ip = &xd[base..base + plane];
                    for ky in 0..3 {
                        let dy = ky as isize - 1;
                        let (y0, y1) = span(h, dy);
                        for kx in 0..3 {
                            let dxo = kx as isize - 1;
                            let (x0, x1) = span(w, dxo);
                            let widx = ((o * ci + c) * 3 + ky) * 3 + kx;
                            let k = wt[widx];
                            let mut gw = T::zero();
                            for y in y0..y1 {
                                let yi = (y as isize + dy) as usize;
                                let grow = &gp[y * w + x0..y * w + x1];
                                let start = ((yi * w) as isize + x0 as isize + dxo) as usize;
                                let len = x1 - x0;
                                let irow = &ip[start..start + len];
                                let drow = &mut dx[base + start..base + start + len];
                                for ((g, a), d) in grow.iter().zip(irow).zip(drow.iter_mut()) {
                                    gw += *g * *a;
                                    *d += *g * k;
                                }
                            }
                            self.weight.grad[widx] += gw;
                        }
                    }
                }
            }
        }
        Tensor::new(x.shape().to_vec(), dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------- pooling

/// 2×2 average pooling with stride 2; odd trailing rows/columns are dropped.
#[derive(Clone, Default)]
pub struct AvgPool2 {
    input_shape: Option<Vec<usize>>,
}

impl<T: Scalar> Layer<T> for AvgPool2 {
    fn kind(&self) -> &'static str {
        "avg_pool2"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        trailing(input, 2, "avg_pool2")?;
        let n = input.len();
        if input[n - 2] < 2 || input[n - 1] < 2 {
            return shape(format!("avg_pool2 needs at least 2×2 maps, got {input:?}"));
        }
        let mut s = input.to_vec();
        s[n - 2] /= 2;
        s[n - 1] /= 2;
        Ok(s)
    }

    fn forward(&mut self, x: &Tensor<T>, _train: bool) -> Result<Tensor<T>> {
        let y = Layer::<T>::infer(self, x)?;
        self.input_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let os = Layer::<T>::output_shape(self, x.shape())?;
        let n = os.len();
        let (h, w) = (x.shape()[n - 2], x.shape()[n - 1]);
        let (oh, ow) = (os[n - 2], os[n - 1]);
        let maps = x.len() / (h * w);
        let q = T::lit(0.25);
        let xd = x.data();
        let mut out = Vec::with_capacity(maps * oh * ow);
        for m in 0..maps {
            let p = &xd[m * h * w..(m + 1) * h * w];
            for y in 0..oh {
                for xx in 0..ow {
                    let (r0, r1) = (2 * y * w + 2 * xx, (2 * y + 1) * w + 2 * xx);
                    out.push(q * (p[r0] + p[r0 + 1] + p[r1] + p[r1 + 1]));
                }
            }
        }
        Tensor::new(os, out)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.input_shape.clone().ok_or_else(no_cache)?;
        let n = s.len();
        let (h, w) = (s[n - 2], s[n - 1]);
        let (oh, ow) = (h / 2, w / 2);
        let maps = grad.len() / (oh * ow);
        let q = T::lit(0.25);
        let gd = grad.data();
        let mut dx = Tensor::zeros(s);
        let d = dx.data_mut();
        for m in 0..maps {
            for y in 0..oh {
                for xx in 0..ow {
                    let g = q * gd[(m * oh + y) * ow + xx];
                    let (r0, r1) = (m * h * w + 2 * y * w + 2 * xx, m * h * w + (2 * y + 1) * w + 2 * xx);
                    d[r0] += g;
                    d[r0 + 1] += g;
                    d[r1] += g;
                    d[r1 + 1] += g;
                }
            }
        }
        Ok(dx)
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

/// Mean over the two trailing (spatial) axes.
#[derive(Clone, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<Vec<usize>>,
}

impl<T: Scalar> Layer<T> for GlobalAvgPool {
    fn kind(&self) -> &'static str {
        "global_avg_pool"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        trailing(input, 2, "global_avg_pool")?;
        Ok(input[..input.len() - 2].to_vec())
    }

    fn forward(&mut self, x: &Tensor<T>, _train: bool) -> Result<Tensor<T>> {
        let y = Layer::<T>::infer(self, x)?;
        self.input_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let os = Layer::<T>::output_shape(self, x.shape())?;
        let n = x.shape().len();
        let plane = x.shape()[n - 2] * x.shape()[n - 1];
        let inv = T::one() / T::from_usize_lossy(plane);
        let out = x.data().chunks(plane).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        Tensor::new(os, out)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.input_shape.clone().ok_or_else(no_cache)?;
        let n = s.len();
        let plane = s[n - 2] * s[n - 1];
        let inv = T::one() / T::from_usize_lossy(plane);
        let mut data = Vec::with_capacity(grad.len() * plane);
        for &g in grad.data() {
            data.extend(std::iter::repeat_n(g * inv, plane));
        }
        Tensor::new(s, data)
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------- ReLU

#[derive(Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl<T: Scalar> Layer<T> for Relu {
    fn kind(&self) -> &'static str {
        "relu"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &Tensor<T>, _train: bool) -> Result<Tensor<T>> {
        self.mask = Some(x.data().iter().map(|&v| v > T::zero()).collect());
        Layer::<T>::infer(self, x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let data = x.data().iter().map(|&v| v.max(T::zero())).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.as_ref().ok_or_else(no_cache)?;
        let data = grad.data().iter().zip(mask).map(|(&g, &m)| if m { g } else { T::zero() }).collect();
        Tensor::new(grad.shape().to_vec(), data)
    }

    fn kink_pattern(&self, out: &mut Vec<bool>) {
        if let Some(m) = &self.mask {
            out.extend_from_slice(m);
        }
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------- BatchNorm

/// Batch normalisation over the trailing feature axis.
#[derive(Clone)]
pub struct BatchNorm<T> {
    pub features: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
    cache: Option<BnCache<T>>,
}

#[derive(Clone)]
struct BnCache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
    shape: Vec<usize>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(features: usize) -> Self {
        Self {
            features,
            gamma: Param::filled(features, T::one()),
            beta: Param::filled(features, T::zero()),
            running_mean: vec![T::zero(); features],
            running_var: vec![T::one(); features],
            momentum: T::lit(0.1),
            eps: T::lit(1e-5),
            cache: None,
        }
    }

    fn batch_stats(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let f = self.features;
        let rows = x.len() / f;
        let nr = T::from_usize_lossy(rows);
        let mut mean = vec![T::zero(); f];
        for r in x.chunks(f) {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nr);
        let mut var = vec![T::zero(); f];
        for r in x.chunks(f) {
            for ((s, &v), &m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= nr);
        (mean, var)
    }

    fn normalise(&self, x: &Tensor<T>, mean: &[T], var: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + self.eps).sqrt()).collect();
        let mut x_hat = Vec::with_capacity(x.len());
        let mut y = Vec::with_capacity(x.len());
        for r in x.data().chunks(self.features) {
            for (k, &v) in r.iter().enumerate() {
                let xh = (v - mean[k]) * inv_std[k];
                x_hat.push(xh);
                y.push(self.gamma.value[k] * xh + self.beta.value[k]);
            }
        }
        (y, x_hat, inv_std)
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn kind(&self) -> &'static str {
        "batch_norm"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.last() != Some(&self.features) {
            return shape(format!("batch_norm expects trailing axis {}, got {input:?}", self.features));
        }
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        self.output_shape(x.shape())?;
        let (mean, var) =
            if train { self.batch_stats(x.data()) } else { (self.running_mean.clone(), self.running_var.clone()) };
        let (y, x_hat, inv_std) = self.normalise(x, &mean, &var);
        if train {
            let rows = x.len() / self.features;
            let unbias = if rows > 1 { T::from_usize_lossy(rows) / T::from_usize_lossy(rows - 1) } else { T::one() };
            let m = self.momentum;
            for k in 0..self.features {
                self.running_mean[k] = (T::one() - m) * self.running_mean[k] + m * mean[k];
                self.running_var[k] = (T::one() - m) * self.running_var[k] + m * var[k] * unbias;
            }
        }
        self.cache = Some(BnCache { x_hat, inv_std, train, shape: x.shape().to_vec() });
        Tensor::new(x.shape().to_vec(), y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.output_shape(x.shape())?;
        let (y, _, _) = self.normalise(x, &self.running_mean, &self.running_var);
        Tensor::new(x.shape().to_vec(), y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.cache.as_ref().ok_or_else(no_cache)?;
        let f = self.features;
        let rows = grad.len() / f;
        let gd = grad.data();
        let mut sum_g = vec![T::zero(); f];
        let mut sum_gx = vec![T::zero(); f];
        for r in 0..rows {
            for k in 0..f {
                let g = gd[r * f + k];
                sum_g[k] += g;
                sum_gx[k] += g * c.x_hat[r * f + k];
            }
        }
        for k in 0..f {
            self.gamma.grad[k] += sum_gx[k];
            self.beta.grad[k] += sum_g[k];
        }
        let mut dx = vec![T::zero(); grad.len()];
        if c.train {
            let nr = T::from_usize_lossy(rows);
            for r in 0..rows {
                for k in 0..f {
                    let i = r * f + k;
                    let scale = self.gamma.value[k] * c.inv_std[k] / nr;
                    dx[i] = scale * (nr * gd[i] - sum_g[k] - c.x_hat[i] * sum_gx[k]);
                }
            }
        } else {
            for r in 0..rows {
                for k in 0..f {
                    let i = r * f + k;
                    dx[i] = gd[i] * self.gamma.value[k] * c.inv_std[k];
                }
            }
        }
        Tensor::new(c.shape.clone(), dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn state(&self) -> Vec<T> {
        self.running_mean.iter().chain(&self.running_var).copied().collect()
    }

    fn set_state(&mut self, state: &[T]) {
        let f = self.features;
        self.running_mean.copy_from_slice(&state[..f]);
        self.running_var.copy_from_slice(&state[f..2 * f]);
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------- LSTM

/// Single LSTM layer returning the last hidden state.
///
/// Gates use the logistic sigmoid. The candidate and output activation is
/// ReLU when `relu` is set, `tanh` otherwise.
#[derive(Clone)]
pub struct Lstm<T> {
    pub n_in: usize,
    pub hidden: usize,
    pub relu: bool,
    /// `[4 hidden, in]`, gate order input, forget, candidate, output.
    pub w_input: Param<T>,
    /// `[4 hidden, hidden]`
    pub w_hidden: Param<T>,
    pub bias: Param<T>,
    cache: Option<LstmCache<T>>,
}

#[derive(Clone)]
struct LstmCache<T> {
    x: Tensor<T>,
    /// `[steps + 1][batch * hidden]`
    h: Vec<Vec<T>>,
    c: Vec<Vec<T>>,
    /// Activated gates `[steps][batch * 4 hidden]`.
    gates: Vec<Vec<T>>,
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Scalar> Lstm<T> {
    pub fn new<R: Rng>(n_in: usize, hidden: usize, relu: bool, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut bias = Param::uniform(4 * hidden, bound, rng);
        for v in &mut bias.value[hidden..2 * hidden] {
            *v += T::one();
        }
        Self {
            n_in,
            hidden,
            relu,
            w_input: Param::uniform(4 * hidden * n_in, bound, rng),
            w_hidden: Param::uniform(4 * hidden * hidden, bound, rng),
            bias,
            cache: None,
        }
    }

    #[inline]
    fn act(&self, z: T) -> T {
        if self.relu {
            z.max(T::zero())
        } else {
            z.tanh()
        }
    }

    /// Derivative of the activation expressed through its input `z`
    /// and output `a`.
    #[inline]
    fn act_grad(&self, z: T, a: T) -> T {
        if self.relu {
            if z > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        } else {
            T::one() - a * a
        }
    }

    fn dims(&self, s: &[usize]) -> Result<(usize, usize)> {
        if s.len() != 3 || s[2] != self.n_in {
            return shape(format!("lstm expects [batch, steps, {}], got {s:?}", self.n_in));
        }
        Ok((s[0], s[1]))
    }

    fn run(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LstmCache<T>)> {
        let (batch, steps) = self.dims(x.shape())?;
        let (hd, ni) = (self.hidden, self.n_in);
        let g4 = 4 * hd;
        let xd = x.data();
        let mut hs = vec![vec![T::zero(); batch * hd]];
        let mut cs = vec![vec![T::zero(); batch * hd]];
        let mut gates = Vec::with_capacity(steps);
        let mut z = vec![T::zero(); g4];
        for t in 0..steps {
            let (hp, cp) = (&hs[t], &cs[t]);
            let mut hn = vec![T::zero(); batch * hd];
            let mut cn = vec![T::zero(); batch * hd];
            let mut gt = vec![T::zero(); batch * g4];
            for b in 0..batch {
                let xt = &xd[(b * steps + t) * ni..(b * steps + t + 1) * ni];
                let hpb = &hp[b * hd..(b + 1) * hd];
                for r in 0..g4 {
                    let wi = &self.w_input.value[r * ni..(r + 1) * ni];
                    let wh = &self.w_hidden.value[r * hd..(r + 1) * hd];
                    let mut acc = self.bias.value[r];
                    for (a, v) in wi.iter().zip(xt) {
                        acc += *a * *v;
                    }
                    for (a, v) in wh.iter().zip(hpb) {
                        acc += *a * *v;
                    }
                    z[r] = acc;
                }
                let g = &mut gt[b * g4..(b + 1) * g4];
                for k in 0..hd {
                    let i = sigmoid(z[k]);
                    let f = sigmoid(z[hd + k]);
                    let cand = self.act(z[2 * hd + k]);
                    let o = sigmoid(z[3 * hd + k]);
                    g[k] = i;
                    g[hd + k] = f;
                    g[2 * hd + k] = cand;
                    g[3 * hd + k] = o;
                    let c = f * cp[b * hd + k] + i * cand;
                    cn[b * hd + k] = c;
                    hn[b * hd + k] = o * self.act(c);
                }
            }
            hs.push(hn);
            cs.push(cn);
            gates.push(gt);
        }
        let out = Tensor::new(vec![batch, hd], hs[steps].clone())?;
        Ok((out, LstmCache { x: x.clone(), h: hs, c: cs, gates }))
    }
}

impl<T: Scalar> Layer<T> for Lstm<T> {
    fn kind(&self) -> &'static str {
        "lstm"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (b, _) = self.dims(input)?;
        Ok(vec![b, self.hidden])
    }

    fn forward(&mut self, x: &Tensor<T>, _train: bool) -> Result<Tensor<T>> {
        let (y, cache) = self.run(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x)?.0)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(no_cache)?;
        let (batch, steps) = self.dims(cache.x.shape())?;
        let (hd, ni) = (self.hidden, self.n_in);
        let g4 = 4 * hd;
        let xd = cache.x.data();
        let mut dx = vec![T::zero(); cache.x.len()];
        let mut dh = grad.data().to_vec();
        let mut dc = vec![T::zero(); batch * hd];
        let mut dz = vec![T::zero(); g4];
        for t in (0..steps).rev() {
            let (hp, cp, cn, gt) = (&cache.h[t], &cache.c[t], &cache.c[t + 1], &cache.gates[t]);
            let mut dh_prev = vec![T::zero(); batch * hd];
            for b in 0..batch {
                let g = &gt[b * g4..(b + 1) * g4];
                for k in 0..hd {
                    let idx = b * hd + k;
                    let (i, f, cand, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                    let c = cn[idx];
                    let ac = self.act(c);
                    let d_o = dh[idx] * ac;
                    let dct = dc[idx] + dh[idx] * o * self.act_grad(c, ac);
                    let d_i = dct * cand;
                    let d_cand = dct * i;
                    let d_f = dct * cp[idx];
                    dc[idx] = dct * f;
                    dz[k] = d_i * i * (T::one() - i);
                    dz[hd + k] = d_f * f * (T::one() - f);
                    // The candidate's pre-activation is positive exactly when
                    // its ReLU output is.
                    dz[2 * hd + k] = d_cand * self.act_grad(cand, cand);
                    dz[3 * hd + k] = d_o * o * (T::one() - o);
                }
                let xt = &xd[(b * steps + t) * ni..(b * steps + t + 1) * ni];
                let dxt = &mut dx[(b * steps + t) * ni..(b * steps + t + 1) * ni];
                let hpb = &hp[b * hd..(b + 1) * hd];
                let dhp = &mut dh_prev[b * hd..(b + 1) * hd];
                for r in 0..g4 {
                    let d = dz[r];
                    if d == T::zero() {
                        continue;
                    }
                    self.bias.grad[r] += d;
                    let gwi = &mut self.w_input.grad[r * ni..(r + 1) * ni];
                    let wi = &self.w_input.value[r * ni..(r + 1) * ni];
                    for q in 0..ni {
                        gwi[q] += d * xt[q];
                        dxt[q] += d * wi[q];
                    }
                    let gwh = &mut self.w_hidden.grad[r * hd..(r + 1) * hd];
                    let wh = &self.w_hidden.value[r * hd..(r + 1) * hd];
                    for q in 0..hd {
                        gwh[q] += d * hpb[q];
                        dhp[q] += d * wh[q];
                    }
                }
            }
            dh = dh_prev;
        }
        self.cache = Some(cache);
        Tensor::new(vec![batch, steps, ni], dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w_input, &self.w_hidden, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }

    fn kink_pattern(&self, out: &mut Vec<bool>) {
        if !self.relu {
            return;
        }
        if let Some(c) = &self.cache {
            let hd = self.hidden;
            for g in &c.gates {
                for chunk in g.chunks(4 * hd) {
                    out.extend(chunk[2 * hd..3 * hd].iter().map(|&v| v > T::zero()));
                }
            }
            for cs in &c.c[1..] {
                out.extend(cs.iter().map(|&v| v > T::zero()));
            }
        }
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}
