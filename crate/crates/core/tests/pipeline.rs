use flr_core::estimator::{beta_hat, select_dimension, Method, SelectionConfig};
use flr_core::experiment::{
    fit_file, method_risks, run_experiment_records, ExperimentConfig, SelectionSettings,
};
use flr_core::fda::{center_sample, load_sample_csv, write_sample_csv, FunctionalSample};
use flr_core::fpca::fit_fpca;
use flr_core::metrics::{gamma_norm_sq, oracle_dimension};
use flr_core::simulator::{Decay, ScenarioSpec, Simulator, Slope};
use flr_core::FlrError;

#[test]
fn simulate_fit_and_score() {
    let sim = Simulator::new(&ScenarioSpec::new(Decay::P2, Slope::Beta2, 400, 12)).unwrap();
    let data = sim.generate(0).unwrap();
    let fit = fit_fpca(&data.sample).unwrap();
    let sel = select_dimension(&data.sample, &fit, &SelectionConfig::known(0.01).unwrap()).unwrap();
    assert!(sel.selected_m >= 1 && sel.selected_m <= sel.max_dim);

    let risk = |m: usize| {
        let d = beta_hat(&fit, m).unwrap().sub(&data.beta).unwrap();
        gamma_norm_sq(&d, &data.eigenvalues, &data.eigenfunctions).unwrap()
    };
    let (oracle_m, oracle_risk) =
        oracle_dimension(&fit, &data.beta, &data.eigenvalues, &data.eigenfunctions, sel.max_dim).unwrap();
    assert_eq!(risk(oracle_m), oracle_risk);
    assert!(oracle_risk <= risk(sel.selected_m));
    assert!(risk(sel.selected_m) < risk(1));
    assert!(risk(sel.selected_m) < 1e-3);
}

#[test]
fn exported_sample_selects_the_same_dimension() {
    let data = Simulator::new(&ScenarioSpec::new(Decay::E, Slope::Beta1, 150, 3))
        .unwrap()
        .generate(2)
        .unwrap();
    let raw = FunctionalSample::new(
        data.sample.grid().clone(),
        data.sample.curves().clone(),
        data.sample.responses().iter().copied().collect(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("curves.csv"), dir.path().join("responses.csv"));
    write_sample_csv(&raw, &x, &y).unwrap();
    let loaded = load_sample_csv(&x, &y).unwrap();
    assert_eq!(loaded, raw);

    let cfg = SelectionConfig::unknown();
    let centred = center_sample(&raw).unwrap();
    let direct = select_dimension(&centred, &fit_fpca(&centred).unwrap(), &cfg).unwrap();
    let via_file = fit_file(&x, &y, Method::Uv, &cfg, 0).unwrap();
    assert_eq!(via_file.selected_m, direct.selected_m);
    assert_eq!(via_file.beta_hat, direct.beta_hat.values());
}

#[test]
fn small_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
    std::fs::write(&x, "0,0.5\n1,2\n2,1\n0,4\n3,3\n5,1\n").unwrap();
    std::fs::write(&y, "1\n2\n3\n4\n5\n").unwrap();
    let err = fit_file(&x, &y, Method::Uv, &SelectionConfig::unknown(), 0).unwrap_err();
    assert!(matches!(err, FlrError::SampleTooSmall(5)));
}

#[test]
fn experiment_is_reproducible_and_seed_sensitive() {
    let scenarios = vec![
        ScenarioSpec::new(Decay::P1, Slope::Beta1, 100, 0),
        ScenarioSpec::new(Decay::E, Slope::Beta2, 80, 0),
    ];
    let cfg = ExperimentConfig {
        selection: SelectionSettings {
            max_dim_cap: Some(8),
            ..SelectionSettings::default()
        },
        master_seed: 5,
        cv_replicate_cap: Some(2),
        ..ExperimentConfig::new(scenarios, Method::ALL.to_vec(), 4)
    };
    let (a, ra) = run_experiment_records(&cfg).unwrap();
    let (b, rb) = run_experiment_records(&ExperimentConfig { threads: Some(2), ..cfg.clone() }).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a.summary, b.summary);
    assert_eq!(a.summary.rows.len(), 8);
    assert_eq!(method_risks(&ra, 1, Method::Cv).len(), 2);
    for r in &ra {
        assert!(r.report.selected_m <= 8);
        assert!(r.report.oracle_risk <= r.report.prediction_error);
        assert!(r.report.prediction_error >= 0.0 && r.report.empirical_error >= 0.0);
    }

    let (_, other) = run_experiment_records(&ExperimentConfig { master_seed: 6, ..cfg }).unwrap();
    assert_ne!(other, ra);
}
