//! Central finite-difference oracle for network gradients.
//!
//! The loss is a fixed random linear functional of the output, so its
//! gradient with respect to the output is the coefficient vector itself.
//! Coordinates whose perturbation flips any ReLU unit are skipped, since the
//! difference quotient straddles a kink there.

use emubench_core::nnkit::{LayerSpec, Network, NetworkSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
/// Denominator floor. Structurally zero gradients (a bias feeding batch
/// normalization) produce difference quotients of pure round-off, around
/// 1e-10, which must not count as relative errors.
pub const FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, Default)]
pub struct Outcome {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
    /// `(analytic, numeric)` at the worst coordinate.
    pub worst: (f64, f64),
}

impl Outcome {
    pub fn merge(self, o: Outcome) -> Outcome {
        Outcome {
            max_rel: self.max_rel.max(o.max_rel),
            worst: if o.max_rel > self.max_rel { o.worst } else { self.worst },
            checked: self.checked + o.checked,
            skipped: self.skipped + o.skipped,
        }
    }
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

fn loss(net: &mut Network<f64>, x: &Tensor<f64>, c: &[f64], train: bool) -> (f64, Vec<bool>) {
    let y = net.forward(x, train).unwrap();
    let l = y.data().iter().zip(c).map(|(a, b)| a * b).sum();
    (l, net.kink_pattern())
}

/// Checks parameter and input gradients of `net` at input `x`.
pub fn check(net: &mut Network<f64>, x: &Tensor<f64>, train: bool, rng: &mut ChaCha8Rng) -> Outcome {
    let y = net.forward(x, train).unwrap();
    let kinks = net.kink_pattern();
    let c: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    net.zero_grad();
    let dx = net.backward(&Tensor::new(y.shape().to_vec(), c.clone()).unwrap()).unwrap();
    let grads = net.flat_grads();
    let params = net.flat_params();
    let mut out = Outcome::default();

    let record = |analytic: f64, plus: (f64, Vec<bool>), minus: (f64, Vec<bool>), out: &mut Outcome| {
        if plus.1 != kinks || minus.1 != kinks {
            out.skipped += 1;
            return;
        }
        let numeric = (plus.0 - minus.0) / (2.0 * STEP);
        let e = rel_error(analytic, numeric);
        if e > out.max_rel {
            out.max_rel = e;
            out.worst = (analytic, numeric);
        }
        out.checked += 1;
    };

    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] = params[i] + STEP;
        net.set_flat_params(&p).unwrap();
        let plus = loss(net, x, &c, train);
        p[i] = params[i] - STEP;
        net.set_flat_params(&p).unwrap();
        let minus = loss(net, x, &c, train);
        record(grads[i], plus, minus, &mut out);
    }
    net.set_flat_params(&params).unwrap();

    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] = x.data()[i] + STEP;
        let plus = loss(net, &xp, &c, train);
        xp.data_mut()[i] = x.data()[i] - STEP;
        let minus = loss(net, &xp, &c, train);
        record(dx.data()[i], plus, minus, &mut out);
    }
    out
}

pub fn random_input(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.5..1.5))
}

/// Runs `draws` checks, each with fresh parameters and input.
pub fn check_spec(
    layers: Vec<LayerSpec>,
    sample_shape: Vec<usize>,
    batch: usize,
    train: bool,
    draws: usize,
    seed: u64,
) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = Outcome::default();
    for d in 0..draws {
        let spec =
            NetworkSpec { input_shape: sample_shape.clone(), layers: layers.clone(), init_seed: seed ^ d as u64 };
        let mut net = Network::<f64>::new(spec).unwrap();
        let mut shape = vec![batch];
        shape.extend(&sample_shape);
        let x = random_input(shape, &mut rng);
        if !train {
            // Populate batch-norm running statistics with a training pass.
            net.forward(&random_input(x.shape().to_vec(), &mut rng), true).unwrap();
        }
        total = total.merge(check(&mut net, &x, train, &mut rng));
    }
    total
}

pub fn fcn_layers(hidden: &[usize]) -> Vec<LayerSpec> {
    NetworkSpec::mlp(1, hidden, 1, 0).layers
}

pub fn cnn_lstm_layers(
    steps: usize,
    channels: usize,
    grid: (usize, usize),
    filters: usize,
    hidden: usize,
) -> (Vec<LayerSpec>, Vec<usize>) {
    let s = NetworkSpec::cnn_lstm(steps, channels, grid, filters, hidden, 0);
    (s.layers, s.input_shape)
}
