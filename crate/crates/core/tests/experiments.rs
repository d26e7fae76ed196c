use emubench_core::emulators::Technique;
use emubench_core::experiments::{
    compare_techniques, run_iv_sweep, DrawTag, ExperimentTable, IvDataset, IvSweepConfig, Metric, SeedTag,
};
use emubench_core::synthgrid::{generate, LatProfile, SynthGridConfig};

fn dataset(sigma: Option<f64>, members: usize) -> IvDataset {
    let mut cfg = SynthGridConfig { n_lat: 4, n_lon: 6, n_members: members, ..SynthGridConfig::default() };
    if let Some(s) = sigma {
        cfg.sigma = LatProfile::constant(s);
    }
    IvDataset::from_synthgrid(&generate(&cfg).unwrap(), "pr").unwrap()
}

fn lps_sweep(data: &IvDataset, grid: Vec<usize>, k: usize) -> ExperimentTable {
    let mut cfg = IvSweepConfig::desk("pr");
    cfg.lps_n_grid = grid;
    cfg.k_draws = k;
    run_iv_sweep(&cfg, data, Technique::Lps).unwrap()
}

#[test]
fn zero_noise_lps_scores_do_not_depend_on_n() {
    let data = dataset(Some(0.0), 6);
    let table = lps_sweep(&data, vec![1, 2, 3, 6], 3);
    let s = table.summary(Technique::Lps, Metric::RmseSpatial);
    assert_eq!(s.len(), 4);
    for w in s.windows(2) {
        assert!((w[0].1 - w[1].1).abs() < 1e-12);
    }
    assert!(s.iter().all(|r| r.2 < 1e-12));
}

#[test]
fn full_subsets_give_identical_draws() {
    let data = dataset(None, 5);
    let table = lps_sweep(&data, vec![5], 4);
    let means = table.draw_means(Technique::Lps, Metric::RmseGlobal);
    let vals: Vec<f64> = means.values().copied().collect();
    assert_eq!(vals.len(), 4);
    assert!(vals.iter().all(|v| *v == vals[0]));
}

#[test]
fn lps_error_on_quadratic_variable_is_bounded_by_the_best_linear_fit() {
    let data = dataset(None, 10);
    let table = lps_sweep(&data, vec![10], 1);
    let lps_err = table.summary(Technique::Lps, Metric::RmseSpatial)[0].1;
    assert!(lps_err.is_finite() && lps_err > 0.0);

    // Best linear approximation: LPS fitted on the noise-free forced signal.
    let clean = dataset(Some(0.0), 2);
    let clean_table = lps_sweep(&clean, vec![1], 1);
    let floor = clean_table.summary(Technique::Lps, Metric::RmseSpatial)[0].1;
    assert!(floor > 0.0);
    assert!(lps_err > 0.5 * floor, "{lps_err} vs floor {floor}");
}

#[test]
fn table_layout_and_round_trip() {
    let data = dataset(None, 4);
    let table = lps_sweep(&data, vec![1, 4], 2);
    // Per metric: (n, k) rows with mean plus (n, all) mean and std.
    let per_metric = 2 * 2 + 2 * 2;
    assert_eq!(table.rows.len(), 2 * per_metric);
    assert!(table.rows.iter().all(|r| r.l_or_mean != SeedTag::Seed(0)));
    assert!(table.rows.iter().any(|r| r.k == DrawTag::All && r.l_or_mean == SeedTag::Std));
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    let back = ExperimentTable::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, table);
    assert_eq!(table.fit_rows().count(), 2 * 2 * 2);
}

#[test]
fn comparing_a_table_with_itself_is_flat() {
    let data = dataset(None, 4);
    let table = lps_sweep(&data, vec![1, 2, 4], 2);
    let c =
        compare_techniques(&table, &table, Technique::Lps, Technique::Lps, Metric::RmseSpatial, (0.0, 20.0)).unwrap();
    assert!(c.per_draw.iter().all(|d| d.2 == 0.0));
    assert_eq!(c.trend.slope, 0.0);
}

#[test]
fn sweep_rejects_subsets_larger_than_the_ensemble() {
    let data = dataset(None, 3);
    let mut cfg = IvSweepConfig::desk("pr");
    cfg.lps_n_grid = vec![4];
    assert!(run_iv_sweep(&cfg, &data, Technique::Lps).is_err());
}

#[test]
fn neural_rows_carry_seed_indices() {
    let data = dataset(None, 2);
    let mut cfg = IvSweepConfig::desk("pr");
    cfg.nn_n_grid = vec![1];
    cfg.k_draws = 1;
    cfg.l_seeds = 2;
    cfg.cnn.optimizer.max_epochs = 1;
    let table = run_iv_sweep(&cfg, &data, Technique::CnnLstm).unwrap();
    let seeds: Vec<SeedTag> = table
        .rows
        .iter()
        .filter(|r| r.metric == Metric::RmseSpatial && r.k == DrawTag::Draw(0))
        .map(|r| r.l_or_mean)
        .collect();
    assert_eq!(seeds, vec![SeedTag::Seed(0), SeedTag::Seed(1), SeedTag::Mean]);
}
