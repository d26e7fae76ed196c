mod common;

use common::gradcheck::{check_spec, cnn_lstm_layers, fcn_layers, Outcome};
use emubench_core::nnkit::LayerSpec;

const TOL: f64 = 1e-4;
const DRAWS: usize = 100;

fn assert_ok(name: &str, o: Outcome) {
    assert!(o.checked > 0, "{name}: nothing checked");
    assert!(
        o.max_rel < TOL,
        "{name}: max relative error {:.3e} over {} coordinates (analytic {:e}, numeric {:e})",
        o.max_rel,
        o.checked,
        o.worst.0,
        o.worst.1
    );
}

#[test]
fn dense() {
    assert_ok("dense", check_spec(vec![LayerSpec::Dense { n_in: 4, n_out: 3 }], vec![4], 3, true, DRAWS, 1));
}

#[test]
fn dense_time_distributed() {
    assert_ok("dense", check_spec(vec![LayerSpec::Dense { n_in: 3, n_out: 2 }], vec![5, 3], 2, true, DRAWS, 2));
}

#[test]
fn conv2d() {
    let layers = vec![LayerSpec::Conv2d { in_channels: 2, out_channels: 3 }];
    assert_ok("conv2d", check_spec(layers, vec![2, 4, 5], 2, true, DRAWS, 3));
}

#[test]
fn avg_pool() {
    assert_ok("avgpool", check_spec(vec![LayerSpec::AvgPool2], vec![2, 4, 6], 2, true, DRAWS, 4));
    // Odd extents drop the last row and column.
    assert_ok("avgpool-odd", check_spec(vec![LayerSpec::AvgPool2], vec![1, 5, 3], 2, true, DRAWS, 5));
}

#[test]
fn global_pool() {
    assert_ok("gap", check_spec(vec![LayerSpec::GlobalAvgPool], vec![3, 4, 5], 2, true, DRAWS, 6));
}

#[test]
fn relu() {
    assert_ok("relu", check_spec(vec![LayerSpec::Relu], vec![7], 3, true, DRAWS, 7));
}

#[test]
fn batchnorm_train_and_inference() {
    assert_ok("bn-train", check_spec(vec![LayerSpec::BatchNorm { features: 3 }], vec![3], 6, true, DRAWS, 8));
    assert_ok("bn-infer", check_spec(vec![LayerSpec::BatchNorm { features: 3 }], vec![3], 6, false, DRAWS, 9));
}

#[test]
fn lstm() {
    let relu = vec![LayerSpec::Lstm { n_in: 3, hidden: 4, relu: true }];
    assert_ok("lstm-relu", check_spec(relu, vec![5, 3], 2, true, DRAWS, 10));
    let tanh = vec![LayerSpec::Lstm { n_in: 3, hidden: 4, relu: false }];
    assert_ok("lstm-tanh", check_spec(tanh, vec![5, 3], 2, true, DRAWS, 11));
}

#[test]
fn fcn_architecture() {
    assert_ok("fcn", check_spec(fcn_layers(&[6, 4]), vec![1], 5, true, DRAWS, 12));
}

#[test]
fn cnn_lstm_architecture() {
    let (layers, shape) = cnn_lstm_layers(3, 2, (4, 6), 3, 4);
    assert_ok("cnn-lstm", check_spec(layers, shape, 2, true, DRAWS, 13));
}
