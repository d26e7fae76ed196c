use emubench_core::dataset::{draw_subset, ensemble_mean};
use emubench_core::ebm::{ensemble_mean_training_set, MemberPool};
use emubench_core::synthgrid::{generate, LatProfile, SynthGridConfig};

fn small() -> SynthGridConfig {
    SynthGridConfig { n_lat: 4, n_lon: 6, n_members: 5, ..SynthGridConfig::default() }
}

#[test]
fn zero_noise_members_equal_forced_signal() {
    let cfg = SynthGridConfig { sigma: LatProfile::constant(0.0), ..small() };
    let grid = generate(&cfg).unwrap();
    for var in ["tas", "pr"] {
        let ens = grid.ensemble(var, "ssp370").unwrap();
        let forced = grid.forced(var, "ssp370").unwrap();
        for m in 0..ens.n_members() {
            assert_eq!(ens.values.index_axis(ndarray::Axis(0), m), forced.values.index_axis(ndarray::Axis(0), 0));
        }
    }
}

#[test]
fn larger_ensembles_track_the_forced_signal_closer() {
    let cfg = SynthGridConfig { n_lat: 6, n_lon: 8, n_members: 50, ..SynthGridConfig::default() };
    let grid = generate(&cfg).unwrap();
    let ens = grid.ensemble("pr", "ssp245").unwrap();
    let forced = grid.forced("pr", "ssp245").unwrap();
    let full = ens.full_mean();
    let three = ensemble_mean(ens, &draw_subset(50, 3, 0, 1).unwrap()).unwrap();
    let (nt, ni, nj) = full.dim();
    let rms = |m: &ndarray::Array3<f64>, i: usize, j: usize| {
        ((0..nt).map(|t| (m[[t, i, j]] - forced.values[[0, t, i, j]]).powi(2)).sum::<f64>() / nt as f64).sqrt()
    };
    let mut closer = 0;
    for i in 0..ni {
        for j in 0..nj {
            if rms(&full, i, j) < rms(&three, i, j) {
                closer += 1;
            }
        }
    }
    assert!(closer as f64 >= 0.95 * (ni * nj) as f64, "{closer} of {} cells", ni * nj);
}

#[test]
fn one_cell_grid_reduces_to_the_box_model() {
    let cfg = SynthGridConfig { n_lat: 1, n_lon: 1, n_members: 7, ..SynthGridConfig::default() };
    let grid = generate(&cfg).unwrap();
    for spec in cfg.scenarios() {
        let cell = cfg.cell_config(spec, grid.ensemble("pr", &spec.name).unwrap().lats[0]);
        let seed = cfg.cell_seed(&spec.name, 0, 0);
        let expect = ensemble_mean_training_set(&cell, 7, 0, seed, MemberPool::Finite(7)).unwrap();
        let got = grid.ensemble("pr", &spec.name).unwrap().full_mean();
        for (t, e) in expect.iter().enumerate() {
            let g = got[[t, 0, 0]];
            assert!((g - e).abs() <= 1e-12 * e.abs().max(1.0), "{} year {t}: {g} vs {e}", spec.name);
        }
    }
}

#[test]
fn generation_is_reproducible_and_seed_dependent() {
    let a = generate(&small()).unwrap();
    let b = generate(&small()).unwrap();
    let c = generate(&SynthGridConfig { base_seed: 5, ..small() }).unwrap();
    let ea = &a.ensemble("tas", "ssp126").unwrap().values;
    assert_eq!(ea, &b.ensemble("tas", "ssp126").unwrap().values);
    assert_ne!(ea, &c.ensemble("tas", "ssp126").unwrap().values);
}

#[test]
fn linear_variable_is_linear_in_cumulative_emissions() {
    let cfg = SynthGridConfig { sigma: LatProfile::constant(0.0), ..small() };
    let grid = generate(&cfg).unwrap();
    let s = grid.scenario("ssp585").unwrap();
    let x = s.inputs.global_series("co2_cum").unwrap();
    let tas = grid.forced("tas", "ssp585").unwrap();
    for i in 0..cfg.n_lat {
        let slope = -cfg.r / cfg.lambda.eval(tas.lats[i]);
        for (t, &xt) in x.iter().enumerate() {
            assert!((tas.values[[0, t, i, 0]] - slope * xt).abs() < 1e-10);
        }
    }
}

#[test]
fn written_collection_round_trips() {
    let grid = generate(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let col = grid.write(dir.path()).unwrap();
    let reopened = emubench_core::dataset::Collection::open(dir.path()).unwrap();
    assert_eq!(col.entries, reopened.entries);
    assert_eq!(reopened.split, grid.split());
    let (ens, inputs) = reopened.load("pr", "ssp119", emubench_core::dataset::EntryRole::Ensemble).unwrap();
    assert_eq!(&ens, grid.ensemble("pr", "ssp119").unwrap());
    assert_eq!(inputs, grid.scenario("ssp119").unwrap().inputs);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(generate(&SynthGridConfig { n_members: 0, ..small() }).is_err());
    assert!(generate(&SynthGridConfig { test_window: 200, ..small() }).is_err());
    assert!(generate(&SynthGridConfig { lambda: LatProfile::constant(0.5), ..small() }).is_err());
}
