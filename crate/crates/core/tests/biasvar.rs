use emubench_core::biasvar::{decompose, decompose_series, fourier_spectrum, one_sided, run_biasvar, Window};
use emubench_core::emulators::Technique;
use emubench_core::BvConfig;

#[test]
fn perfect_fits_have_zero_spectrum() {
    let forced = vec![0.3, 1.0, -0.5, 2.0, 0.1];
    let fits = vec![forced.clone(), forced.clone()];
    assert!(fourier_spectrum(&fits, &forced, false).unwrap().iter().all(|&v| v == 0.0));
    let d = decompose_series(&fits, &forced).unwrap();
    assert_eq!((d.bias2, d.var, d.mse), (0.0, 0.0, 0.0));
}

#[test]
fn parseval_identity() {
    let forced: Vec<f64> = (0..32).map(|t| (t as f64 * 0.3).sin()).collect();
    let fits: Vec<Vec<f64>> = (0..4)
        .map(|k| forced.iter().enumerate().map(|(t, f)| f + ((t * (k + 3)) % 7) as f64 * 0.1 - 0.3).collect())
        .collect();
    let v = fourier_spectrum(&fits, &forced, false).unwrap();
    let lhs = v.iter().sum::<f64>() / forced.len() as f64;
    let rhs = fits.iter().map(|f| f.iter().zip(&forced).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sum::<f64>()
        / fits.len() as f64;
    assert!((lhs - rhs).abs() < 1e-10 * rhs);
}

#[test]
fn decomposition_identity_on_random_draws() {
    let fits: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.17 - 0.4).collect();
    let d = decompose(&fits, 0.25).unwrap();
    assert!((d.mse - d.bias2 - d.var).abs() < 1e-12);
}

#[test]
fn small_run_produces_every_entry_and_csvs() {
    let mut cfg = BvConfig::desk();
    cfg.k_draws = 3;
    cfg.n_grid = vec![2, 5];
    cfg.fcn.optimizer.max_epochs = 5;
    let res = run_biasvar(&cfg).unwrap();
    assert_eq!(res.entries.len(), 4);
    for t in [Technique::Linear1d, Technique::Fcn] {
        for n in [2, 5] {
            let e = res.entry(t, n).unwrap();
            let d = &e.decomposition;
            assert!(((d.mse - d.bias2 - d.var) / d.mse).abs() < 1e-10);
            assert_eq!(e.spectrum.len(), cfg.ebm.n_steps() / 2);
            assert_eq!(e.mean_fit.len(), cfg.ebm.n_steps());
        }
    }
    let mut buf = Vec::new();
    res.write_biasvar_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    let mut buf = Vec::new();
    res.write_spectra_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 4 * cfg.ebm.n_steps() / 2);
}

#[test]
fn full_series_window_and_determinism() {
    let mut cfg = BvConfig::desk();
    cfg.k_draws = 2;
    cfg.n_grid = vec![3];
    cfg.techniques = vec![Technique::Linear1d];
    cfg.window = Window::FullSeries;
    let a = run_biasvar(&cfg).unwrap();
    let b = run_biasvar(&cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.entries[0].decomposition.var > 0.0);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = BvConfig::desk();
    cfg.k_draws = 1;
    assert!(run_biasvar(&cfg).is_err());
    let mut cfg = BvConfig::desk();
    cfg.techniques = vec![Technique::Lps];
    assert!(run_biasvar(&cfg).is_err());
    let mut cfg = BvConfig::desk();
    cfg.window = Window::EndOfSeries { len: 10_000 };
    assert!(run_biasvar(&cfg).is_err());
}

#[test]
fn one_sided_drops_the_mean_bin() {
    let s = one_sided(&[9.0, 1.0, 2.0, 3.0, 2.0, 1.0], 1.0);
    assert_eq!(s, vec![(6.0, 1.0), (3.0, 2.0), (2.0, 3.0)]);
}

#[test]
fn white_noise_errors_have_flat_spectrum() {
    use rand_distr::{Distribution, StandardNormal};
    let len = 128;
    let forced: Vec<f64> = (0..len).map(|t| (t as f64 * 0.05).sin()).collect();
    let mut rng = emubench_core::seed::rng(11);
    let fits: Vec<Vec<f64>> = (0..2000)
        .map(|_| {
            forced
                .iter()
                .map(|f| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    f + z
                })
                .collect()
        })
        .collect();
    let v = fourier_spectrum(&fits, &forced, false).unwrap();
    let (lo, hi) = v.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    assert!(hi / lo < 2.0, "max/min {}", hi / lo);
    let mean = v.iter().sum::<f64>() / len as f64;
    assert!((mean / len as f64 - 1.0).abs() < 0.02, "mean energy {mean}");
}
