mod common;

use std::sync::Arc;

use cdac::baselines::{infomax_solve, ContinuationRule, InfomaxConfig, ThresholdPolicy};
use cdac::harness::compare::compare_policies;
use cdac::harness::config::EnvironmentConfig;
use cdac::harness::export::{export_policy_map, export_policy_pgm, policy_map_csv, policy_map_pgm};
use cdac::harness::stats::{run_batch, separation, TrialStats};
use cdac::harness::store::{encode_tables, load_tables, save_tables, StoreError};
use cdac::harness::trial::{
    run_records, run_trial_traced, AlwaysStop, TableController, TrialSetup,
};
use cdac::observation::StopRule;
use cdac::solver::Action;
use cdac::{CostParams, Observation, SimplexGrid, TaskKind, TaskModel};

use common::solve;

fn simple_setup(beta: f64, c: f64, cs: f64) -> TrialSetup {
    TrialSetup::new(TaskModel::simple(beta).unwrap(), CostParams::new(c, cs).unwrap(), 0)
}

#[test]
fn always_stop_is_right_a_third_of_the_time() {
    let setup = simple_setup(0.9, 0.1, 0.0);
    let stats = run_batch(&AlwaysStop { rule: StopRule::FixatedLocation }, &setup, 30_000, 5);
    assert!((stats.accuracy.mean - 1.0 / 3.0).abs() < 0.01, "{:?}", stats.accuracy);
    assert_eq!(stats.steps.mean, 0.0);
}

#[test]
fn single_trial_batch_has_no_standard_errors() {
    let setup = simple_setup(0.9, 0.1, 0.0);
    let stats = run_batch(&AlwaysStop { rule: StopRule::FixatedLocation }, &setup, 1, 3);
    assert_eq!(stats.n_trials, 1);
    assert_eq!(stats.accuracy.stderr, None);
    assert!(stats.accuracy.mean == 0.0 || stats.accuracy.mean == 1.0);
}

#[test]
fn perfect_sensor_first_update() {
    // Solved under beta = 0.9, observed through a noiseless sensor.
    let model = TaskModel::simple(0.9).unwrap();
    let (_, sol) = solve(&model, 0.1, 0.0, 200);
    let mut setup = simple_setup(0.9, 0.1, 0.0);
    setup.generative = Some(TaskModel::simple(1.0).unwrap());
    let (rec, trace) = run_trial_traced(&TableController { policy: &sol.policy }, &setup, 0, 77);
    assert_eq!(trace[0].fixation, 0);
    assert_eq!(trace[0].observation, Observation(1));
    let p = trace[0].belief.probs();
    assert!((p[0] - 9.0 / 11.0).abs() < 1e-12 && (p[1] - 1.0 / 11.0).abs() < 1e-12);
    assert!(rec.correct);
}

#[test]
fn records_are_consistent() {
    for (model, c, cs, init) in [
        (TaskModel::simple(0.8).unwrap(), 0.1, 0.0, 0),
        (TaskModel::simple(0.9).unwrap(), 0.1, 0.1, 0),
        (TaskModel::peripheral([0.62, 0.6, 0.55, 0.5]).unwrap(), 0.05, 0.005, 6),
    ] {
        let (_, sol) = solve(&model, c, cs, 100);
        let costs = CostParams::new(c, cs).unwrap();
        let setup = TrialSetup::new(model, costs, init);
        let records = run_records(&TableController { policy: &sol.policy }, &setup, 3000, 11);
        for r in &records {
            assert!(r.switches <= r.steps);
            assert_eq!(r.total_cost, r.recompute_cost(&costs));
            assert_eq!(r.correct, !r.capped && r.declared == r.target);
        }
        let stats = TrialStats::from_records(&records, 11);
        assert_eq!(stats.correct() + stats.errors + stats.capped, stats.n_trials);
        assert!((stats.accuracy.mean - stats.correct() as f64 / stats.n_trials as f64).abs() < 1e-12);
    }
}

#[test]
fn batches_are_deterministic_and_seed_stable() {
    let model = TaskModel::simple(0.8).unwrap();
    let (_, sol) = solve(&model, 0.1, 0.0, 100);
    let setup = simple_setup(0.8, 0.1, 0.0);
    let ctl = TableController { policy: &sol.policy };
    assert_eq!(run_records(&ctl, &setup, 500, 9), run_records(&ctl, &setup, 500, 9));
    let a = run_batch(&ctl, &setup, 5000, 1);
    let b = run_batch(&ctl, &setup, 5000, 2);
    assert_ne!(a, b);
    assert!(separation(&a.accuracy, &b.accuracy).abs() < 3.0);
    assert!(separation(&a.total_cost, &b.total_cost).abs() < 3.0);
}

#[test]
fn cdac_beats_always_stop() {
    let model = TaskModel::simple(0.9).unwrap();
    let (_, sol) = solve(&model, 0.1, 0.1, 120);
    let setup = simple_setup(0.9, 0.1, 0.1);
    let stats = run_batch(&TableController { policy: &sol.policy }, &setup, 5000, 4);
    assert!(stats.total_cost.mean + 3.0 * stats.total_cost.se() < 2.0 / 3.0);
}

#[test]
fn stalled_threshold_policy_hits_the_cap() {
    let model = TaskModel::simple(0.9).unwrap();
    let grid = Arc::new(SimplexGrid::new(3, 60).unwrap());
    let info = infomax_solve(&model, grid, InfomaxConfig { horizon: 5 }).unwrap();
    let policy = ThresholdPolicy::new(model, ContinuationRule::Infomax(Arc::new(info)), 0.999).unwrap();
    let mut setup = simple_setup(0.9, 0.1, 0.0);
    setup.cap = 50;
    let stats = run_batch(&policy, &setup, 2000, 8);
    assert!(stats.capped > 0);
    assert!(stats.steps.mean <= 50.0);
}

#[test]
fn table_files_round_trip_exactly() {
    let model = TaskModel::peripheral([0.62, 0.6, 0.55, 0.5]).unwrap();
    let costs = CostParams::new(0.05, 0.005).unwrap();
    let (_, sol) = solve(&model, 0.05, 0.005, 30);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    save_tables(&path, &model, &costs, &sol.values, &sol.policy).unwrap();
    let (v, p) = load_tables(&path, &model, &costs, 30).unwrap();
    assert!(v.as_slice().iter().zip(sol.values.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(p, sol.policy);
    let again = encode_tables(&model, &costs, &v, &p).unwrap();
    assert_eq!(again, std::fs::read(&path).unwrap());

    assert!(matches!(
        load_tables(&path, &model, &costs, 31),
        Err(StoreError::Mismatch { field: "grid n", .. })
    ));
    let other = CostParams::new(0.05, 0.0).unwrap();
    assert!(matches!(load_tables(&path, &model, &other, 30), Err(StoreError::Mismatch { .. })));
    let simple = TaskModel::simple(0.9).unwrap();
    assert!(matches!(load_tables(&path, &simple, &costs, 30), Err(StoreError::Mismatch { .. })));

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[8] = 9;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_tables(&path, &model, &costs, 30), Err(StoreError::Version { found: 9, .. })));
    std::fs::write(&path, b"garbage").unwrap();
    assert!(matches!(load_tables(&path, &model, &costs, 30), Err(StoreError::BadMagic { .. })));
    let missing = dir.path().join("nope.bin");
    let err = load_tables(&missing, &model, &costs, 30).unwrap_err();
    assert!(err.to_string().contains("nope.bin"));
}

#[test]
fn policy_map_export() {
    let model = TaskModel::peripheral([0.62, 0.6, 0.55, 0.5]).unwrap();
    let (grid, sol) = solve(&model, 0.05, 0.0, 200);
    let csv = policy_map_csv(&sol.policy, 0).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "p1,p2,p3,action");
    assert_eq!(lines.len() - 1, 20301);
    let e1 = grid.vertex_index(0);
    let row: Vec<&str> = lines[e1 + 1].split(',').collect();
    assert_eq!(&row[..3], &["1", "0", "0"]);
    assert_eq!(row[3], Action::Stop { declare: 0 }.code().to_string());

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    export_policy_map(&sol.policy, 0, &a).unwrap();
    export_policy_map(&sol.policy, 0, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let pgm = policy_map_pgm(&sol.policy, 0).unwrap();
    let header = b"P5\n201 201\n255\n";
    assert_eq!(&pgm[..header.len()], header);
    assert_eq!(pgm.len(), header.len() + 201 * 201);
    // Bottom-left pixel is the p1 = 0, p2 = 0 corner: vertex 3, stop there.
    let px = |x: usize, y: usize| pgm[header.len() + y * 201 + x];
    assert_eq!(px(0, 200), 25 * Action::Stop { declare: 2 }.code());
    assert_eq!(px(200, 0), 255);
    export_policy_pgm(&sol.policy, 0, &dir.path().join("m.pgm")).unwrap();
    assert!(export_policy_map(&sol.policy, 7, &a).is_err());
    assert!(export_policy_map(&sol.policy, 0, &dir.path().join("no/such/dir.csv"))
        .unwrap_err()
        .to_string()
        .contains("no/such/dir.csv"));
}

#[test]
fn compare_report_is_reproducible() {
    let mut env = EnvironmentConfig::new(TaskKind::Simple, 0.1, 0.0, vec![0.8]);
    env.grid_n = 60;
    env.trials = 2000;
    env.infomax_horizon = 8;
    env.include_greedy = true;
    let a = compare_policies(&env).unwrap();
    let b = compare_policies(&env).unwrap();
    assert_eq!(a.to_table(), b.to_table());
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.rows.len(), 3);
    let cdac = a.row("c-dac").unwrap();
    for name in ["infomax", "greedy-map"] {
        let row = a.row(name).unwrap();
        assert!((row.stats.accuracy.mean - cdac.stats.accuracy.mean).abs() <= 0.05, "{name}");
        assert!(row.threshold.is_some());
    }
    assert_eq!(a.to_csv().lines().count(), 4);
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.json");
    let mut env = EnvironmentConfig::new(TaskKind::Peripheral, 0.05, 0.005, vec![0.62, 0.6, 0.55, 0.5]);
    env.initial_fixation = Some("l123".into());
    std::fs::write(&path, serde_json::to_string_pretty(&env).unwrap()).unwrap();
    assert_eq!(EnvironmentConfig::load(&path).unwrap(), env);
    std::fs::write(&path, r#"{"task":"peripheral","c":0.05,"betas":[0.6,0.62,0.55,0.5]}"#).unwrap();
    assert!(EnvironmentConfig::load(&path).is_err());
}
