//! Trials and sweeps end to end.

use hvsense::bench::{run_sweep, run_trial, summarize, Frontend, Solver, SweepSpec, SweepVar, TrialOptions};
use hvsense::config::parse_config;
use hvsense::report::{read_rows, write_sweep};
use hvsense::BenchError;
use hvsense_core::channel::ScenarioConfig;

fn noiseless() -> ScenarioConfig {
    ScenarioConfig {
        noiseless: true,
        ..ScenarioConfig::default()
    }
}

#[test]
fn trials_are_deterministic_apart_from_wall_time() {
    let cfg = ScenarioConfig::default();
    for solver in [Solver::Single2d, Solver::Decoupled, Solver::Box, Solver::Combine] {
        let opts = TrialOptions::new(solver);
        let a = run_trial(&cfg, &opts, 3, 77).unwrap();
        let b = run_trial(&cfg, &opts, 3, 77).unwrap();
        assert!(a.same_outcome(&b), "{solver}");
        let c = run_trial(&cfg, &opts, 3, 78).unwrap();
        assert!(!a.same_outcome(&c));
    }
}

#[test]
fn sweep_output_does_not_depend_on_scheduling() {
    let cfg = ScenarioConfig::default();
    let opts = TrialOptions::new(Solver::Single2d);
    let spec = SweepSpec::parse("distance=30,60", 12).unwrap();
    let a = run_sweep(&cfg, &opts, &spec, 5).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| run_sweep(&cfg, &opts, &spec, 5).unwrap());
    assert_eq!(a.rows.len(), 24);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!(x.same_outcome(y));
    }
    // rows come back in submission order
    let order: Vec<(usize, usize)> = a.rows.iter().map(|r| (r.point, r.trial)).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
}

#[test]
fn noiseless_single_cluster_is_exact() {
    let cfg = noiseless();
    for solver in [Solver::Single2d, Solver::Combine] {
        let opts = TrialOptions::new(solver);
        for t in 0..10 {
            let r = run_trial(&cfg, &opts, t, 1000 + t as u64).unwrap();
            assert!(r.success, "{r:?}");
            assert!(r.positioning_error.unwrap() <= 1e-12, "{r:?}");
        }
    }
    let opts = TrialOptions::new(Solver::Decoupled);
    for t in 0..10 {
        let r = run_trial(&cfg, &opts, t, 2000 + t as u64).unwrap();
        assert!(r.positioning_error.unwrap() <= 1e-12, "{r:?}");
        assert!(r.sizing_error.unwrap() < 1e-6);
    }
}

#[test]
fn noiseless_combining_recovers_speed() {
    let cfg = noiseless();
    let mut opts = TrialOptions::new(Solver::Combine);
    opts.slots = 3;
    let r = run_trial(&cfg, &opts, 0, 9).unwrap();
    assert!(r.success, "{r:?}");
    assert!(r.velocity_error.unwrap() < 1e-6);
    assert!(r.positioning_error.unwrap() < 1e-12);
}

#[test]
fn defaults_run_without_overrides() {
    let cfg = parse_config("{}").unwrap();
    for solver in [
        Solver::Single2d,
        Solver::Decoupled,
        Solver::Disk,
        Solver::Box,
        Solver::Combine,
    ] {
        let r = run_trial(&cfg, &TrialOptions::new(solver), 0, 1).unwrap();
        assert!(r.success, "{solver}: {r:?}");
        assert_eq!(r.version, hvsense_core::VERSION);
        assert_eq!(r.config_hash.len(), 16);
    }
}

#[test]
fn exact_path_counts_make_small_draws_infeasible() {
    let cfg = ScenarioConfig::default();
    let mut opts = TrialOptions::new(Solver::Single2d);
    opts.exact_paths = Some(40);
    let r = run_trial(&cfg, &opts, 0, 1).unwrap();
    assert!(!r.success);
    assert!(r.positioning_error.is_none());
    assert!(r.failure.unwrap().contains("40"));
    opts.exact_paths = Some(5);
    let r = run_trial(&cfg, &opts, 0, 1).unwrap();
    assert_eq!(r.paths, 5);
    assert!(r.success);
}

#[test]
fn zero_multibounce_matches_the_clean_baseline() {
    let base = ScenarioConfig::default();
    let opts = TrialOptions::new(Solver::Single2d);
    let spec = SweepSpec::parse("multibounce_fraction=0", 8).unwrap();
    let swept = run_sweep(&base, &opts, &spec, 3).unwrap();
    let clean = run_sweep(&base, &opts, &SweepSpec::single(8), 3).unwrap();
    for (a, b) in swept.rows.iter().zip(&clean.rows) {
        assert_eq!(a.positioning_error, b.positioning_error);
        assert_eq!(a.seed, b.seed);
    }
}

#[test]
fn summaries_recompute_from_written_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs.csv");
    let spec = SweepSpec::parse("paths=3,6", 10).unwrap();
    let sweep = run_sweep(
        &ScenarioConfig::default(),
        &TrialOptions::new(Solver::Single2d),
        &spec,
        11,
    )
    .unwrap();
    let summary_path = write_sweep(&out, &sweep).unwrap();
    let rows = read_rows(&out).unwrap();
    assert_eq!(rows.len(), 20);
    assert_eq!(summarize(&rows), sweep.summary);
    assert_eq!(sweep.summary[0].success_rate, 0.0);
    assert_eq!(sweep.summary[0].mean_positioning_error, None);
    assert_eq!(sweep.summary[1].success_rate, 1.0);
    let text = std::fs::read_to_string(summary_path).unwrap();
    assert!(text.starts_with("point,sweep_var,sweep_value,trials,successes,success_rate"));
}

#[test]
fn configuration_problems_are_errors() {
    let cfg = ScenarioConfig::default();
    let mut opts = TrialOptions::new(Solver::Sphere);
    opts.frontend = Frontend::Signal;
    assert!(matches!(run_trial(&cfg, &opts, 0, 0), Err(BenchError::Config(_))));
    let spec = SweepSpec::parse("distance=20,1000", 2).unwrap();
    let err = run_sweep(&cfg, &TrialOptions::new(Solver::Single2d), &spec, 0).unwrap_err();
    assert!(matches!(err, BenchError::Config(_)), "{err}");
    assert!(SweepVar::Q
        .apply(&cfg, &TrialOptions::new(Solver::Combine), 2.5)
        .is_err());
}

#[test]
fn signal_front_end_feeds_the_solver() {
    let cfg = ScenarioConfig {
        tx_antennas: 8,
        rx_antennas: 8,
        ..ScenarioConfig::default()
    };
    let mut opts = TrialOptions::new(Solver::Single2d);
    opts.frontend = Frontend::Signal;
    let r = run_trial(&cfg, &opts, 0, 4).unwrap();
    assert_eq!(r.frontend, "signal");
    assert!(r.paths > 0);
}
