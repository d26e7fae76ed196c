use super::*;

fn dense_net(n_in: usize, n_out: usize) -> Network<f64> {
    Network::new(NetworkSpec { input_shape: vec![n_in], layers: vec![LayerSpec::Dense { n_in, n_out }], init_seed: 3 })
        .unwrap()
}

#[test]
fn identity_dense_passes_input_through() {
    let mut net = dense_net(3, 3);
    let mut flat = vec![0.0; 12];
    for i in 0..3 {
        flat[i * 3 + i] = 1.0;
    }
    net.set_flat_params(&flat).unwrap();
    let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
    assert_eq!(net.predict(&x).unwrap().data(), x.data());
}

#[test]
fn global_pool_of_constant_field() {
    let mut pool = GlobalAvgPool::default();
    let x = Tensor::from_fn(vec![2, 3, 4, 5], |_| 1.75f64);
    let y = pool.forward(&x, false).unwrap();
    assert_eq!(y.shape(), &[2, 3]);
    assert!(y.data().iter().all(|&v| (v - 1.75).abs() < 1e-15));
}

#[test]
fn conv_ones_kernel_center_is_nine() {
    let mut rng = crate::seed::rng(0);
    let mut conv = Conv2d::<f64>::new(1, 1, &mut rng);
    conv.weight.value.iter_mut().for_each(|w| *w = 1.0);
    conv.bias.value[0] = 0.0;
    let x = Tensor::from_fn(vec![1, 1, 3, 3], |_| 1.0);
    let y = conv.infer(&x).unwrap();
    assert_eq!(y.data()[4], 9.0);
    // Corners see four in-bounds pixels, edges six.
    assert_eq!(y.data()[0], 4.0);
    assert_eq!(y.data()[1], 6.0);
}

#[test]
fn dense_gradient_closed_form() {
    let mut net = dense_net(3, 2);
    let x = Tensor::new(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
    let y = Tensor::new(vec![1, 2], vec![0.3, -0.7]).unwrap();
    net.zero_grad();
    let pred = net.forward(&x, true).unwrap();
    // Sum-of-squares loss on one sample: gradient 2 (ŷ - y) per output.
    let g: Vec<f64> = pred.data().iter().zip(y.data()).map(|(a, b)| 2.0 * (a - b)).collect();
    net.backward(&Tensor::new(vec![1, 2], g.clone()).unwrap()).unwrap();
    let grads = net.flat_grads();
    for o in 0..2 {
        for i in 0..3 {
            assert!((grads[o * 3 + i] - g[o] * x.data()[i]).abs() < 1e-14);
        }
        assert!((grads[6 + o] - g[o]).abs() < 1e-14);
    }
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let spec = NetworkSpec::cnn_lstm(3, 2, (4, 6), 4, 5, 11);
    let mut net = Network::<f64>::new(spec).unwrap();
    let x = Tensor::from_fn(vec![2, 3, 2, 4, 6], |i| ((i * 37) % 11) as f64 / 5.0 - 1.0);
    net.zero_grad();
    let out = net.forward(&x, true).unwrap();
    net.backward(&Tensor::zeros(out.shape().to_vec())).unwrap();
    assert!(net.flat_grads().iter().all(|&g| g == 0.0));

    let mut fcn = Network::<f64>::new(NetworkSpec::mlp(1, &[8, 4], 1, 2)).unwrap();
    let x = Tensor::new(vec![4, 1], vec![0.1, 0.4, -0.3, 1.2]).unwrap();
    fcn.zero_grad();
    fcn.forward(&x, true).unwrap();
    fcn.backward(&Tensor::zeros(vec![4, 1])).unwrap();
    assert!(fcn.flat_grads().iter().all(|&g| g == 0.0));
}

#[test]
fn batchnorm_train_mode_standardizes() {
    let mut bn = BatchNorm::<f64>::new(3);
    let x = Tensor::from_fn(vec![16, 3], |i| ((i * 7919) % 23) as f64 * 0.37 + (i % 3) as f64 * 5.0);
    let y = bn.forward(&x, true).unwrap();
    for f in 0..3 {
        let col: Vec<f64> = (0..16).map(|r| y.data()[r * 3 + f]).collect();
        let m = col.iter().sum::<f64>() / 16.0;
        let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 16.0;
        assert!(m.abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-4, "{v}");
    }
}

#[test]
fn batchnorm_inference_is_affine() {
    let mut bn = BatchNorm::<f64>::new(2);
    let x = Tensor::from_fn(vec![8, 2], |i| (i as f64).sin() * 3.0);
    bn.forward(&x, true).unwrap();
    let a = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
    let b = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
    let c = Tensor::new(vec![1, 2], vec![3.0, 3.0]).unwrap();
    let (ya, yb, yc) = (bn.infer(&a).unwrap(), bn.infer(&b).unwrap(), bn.infer(&c).unwrap());
    for f in 0..2 {
        let slope = yb.data()[f] - ya.data()[f];
        assert!((yc.data()[f] - ya.data()[f] - 3.0 * slope).abs() < 1e-12);
    }
}

#[test]
fn fcn_parameter_count() {
    let net = Network::<f64>::new(NetworkSpec::mlp(1, &[64, 32], 1, 0)).unwrap();
    // Dense 1->64, BN 64, Dense 64->32, BN 32, Dense 32->1.
    let expect = (64 + 64) + 2 * 64 + (64 * 32 + 32) + 2 * 32 + (32 + 1);
    assert_eq!(net.n_params(), expect);
}

#[test]
fn cnn_lstm_parameter_count_scales_through_decoder() {
    let count = |ni: usize, nj: usize| {
        Network::<f64>::new(NetworkSpec::cnn_lstm(10, 4, (ni, nj), 20, 25, 0)).unwrap().n_params()
    };
    let encoder = (20 * 4 * 9 + 20) + 4 * 25 * (20 + 25 + 1);
    assert_eq!(count(12, 24), encoder + 25 * 288 + 288);
    assert_eq!(count(96, 144) - count(12, 24), 26 * (96 * 144 - 288));
    let net = Network::<f64>::new(NetworkSpec::cnn_lstm(10, 4, (96, 144), 20, 25, 0)).unwrap();
    let counts = net.layer_param_counts();
    let last = counts.last().unwrap().1 as f64;
    assert!(last / net.n_params() as f64 > 0.95);
}

#[test]
fn forward_rejects_wrong_shape() {
    let mut net = dense_net(3, 2);
    let x = Tensor::new(vec![1, 4], vec![0.0; 4]).unwrap();
    assert!(net.forward(&x, true).is_err());
    assert!(net.predict(&x).is_err());
}

#[test]
fn incompatible_layers_rejected() {
    let spec = NetworkSpec {
        input_shape: vec![3],
        layers: vec![LayerSpec::Dense { n_in: 3, n_out: 4 }, LayerSpec::Dense { n_in: 5, n_out: 1 }],
        init_seed: 0,
    };
    assert!(Network::<f64>::new(spec).is_err());
}

fn linear_data(n: usize) -> TensorSet<f64> {
    let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
    TensorSet::new(Tensor::new(vec![n, 1], xs).unwrap(), Tensor::new(vec![n, 1], ys).unwrap()).unwrap()
}

#[test]
fn fits_scaled_identity() {
    let data = linear_data(64);
    let mut net = dense_net(1, 1);
    let mut spec = OptimizerSpec::adamw_default();
    spec.learning_rate = 0.05;
    spec.weight_decay = 0.0;
    spec.batch_size = 8;
    let report = train(&mut net, &spec, &data, &data, 9).unwrap();
    assert!(report.epochs_run() <= 150);
    assert!(report.best_stop_loss < 1e-6, "{}", report.best_stop_loss);
    assert!(evaluate(&net, &data).unwrap() < 1e-6);
}

#[test]
fn checkpoint_is_last_improving_epoch() {
    let data = linear_data(32);
    let mut net = dense_net(1, 1);
    let mut spec = OptimizerSpec::rmsprop_default();
    spec.learning_rate = 0.05;
    spec.max_epochs = 40;
    spec.patience = None;
    let report = train(&mut net, &spec, &data, &data, 1).unwrap();
    let mut best = (0, report.initial_stop_loss);
    for (e, &l) in report.stop_loss.iter().enumerate() {
        if l < best.1 {
            best = (e + 1, l);
        }
    }
    assert_eq!(report.best_epoch, best.0);
    assert!((evaluate(&net, &data).unwrap() - best.1).abs() < 1e-15);
}

#[test]
fn training_is_reproducible() {
    let data = linear_data(40);
    let run = |seed| {
        let mut net = Network::<f64>::new(NetworkSpec::mlp(1, &[6, 4], 1, 5)).unwrap();
        let mut spec = OptimizerSpec::adamw_default();
        spec.max_epochs = 5;
        spec.batch_size = 7;
        train(&mut net, &spec, &data, &data, seed).unwrap();
        net.flat_params()
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

#[test]
fn divergence_reports_epoch() {
    let data = linear_data(16);
    let mut big = data.clone();
    big.targets.data_mut().iter_mut().for_each(|v| *v *= 1e300);
    let mut net = dense_net(1, 1);
    let err = train(&mut net, &OptimizerSpec::rmsprop_default(), &big, &data, 0).unwrap_err();
    assert!(matches!(err, crate::Error::Diverged { epoch: 1, .. }), "{err:?}");
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut net = Network::<f64>::new(NetworkSpec::mlp(1, &[4], 1, 8)).unwrap();
    let x = Tensor::new(vec![5, 1], vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
    net.forward(&x, true).unwrap();
    net.save(dir.path()).unwrap();
    let back = Network::<f64>::load(dir.path()).unwrap();
    assert_eq!(back.predict(&x).unwrap().data(), net.predict(&x).unwrap().data());
}

#[test]
fn f32_network_runs() {
    let mut net = Network::<f32>::new(NetworkSpec::mlp(1, &[4], 1, 8)).unwrap();
    let x = Tensor::new(vec![3, 1], vec![0.0f32, 1.0, 2.0]).unwrap();
    assert_eq!(net.forward(&x, true).unwrap().shape(), &[3, 1]);
}
