use wsnloc::filters::FilterKind;
use wsnloc::harness::output::{
    write_rounds, write_summary, write_sweep_long, write_trace, OutputHeader,
};
use wsnloc::harness::{
    run_experiment, run_round, simulate_truth, sweep, Execution, RmseReport, ScenarioConfig,
    SweepParameter,
};
use wsnloc::rng::round_seed;

fn small() -> ScenarioConfig {
    let mut c = ScenarioConfig::defaults();
    c.rounds = 6;
    c.mobility.num_steps = 15;
    c
}

#[test]
fn report_statistics_recompute_from_rounds() {
    let report = run_experiment(&small(), FilterKind::PfTdoa).unwrap();
    let n = report.rmse.len() as f64;
    let mean = report.rmse.iter().sum::<f64>() / n;
    let var = report.rmse.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((report.mean - mean).abs() < 1e-12);
    assert!((report.variance - var).abs() < 1e-12);
    assert_eq!(report.round_seeds[2], round_seed(report.seed, 2));
}

#[test]
fn report_json_round_trips() {
    let report = run_experiment(&small(), FilterKind::Ukf).unwrap();
    let back: RmseReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn particle_sweep_keeps_ground_truth_paired() {
    let c = small();
    let seed = round_seed(c.seed, 0);
    let base = simulate_truth(&c, seed).unwrap();
    for n in [10, 200] {
        let c2 = SweepParameter::Particles.apply(&c, n).unwrap();
        assert_eq!(simulate_truth(&c2, seed).unwrap(), base);
    }
    let reports = sweep(&c, SweepParameter::Particles, &[10, 200], Execution::Serial).unwrap();
    assert_eq!(reports[0].round_seeds, reports[1].round_seeds);
    assert_eq!(reports[1].config.filter.particles, 200);
}

#[test]
fn noiseless_single_step_kalman_is_exact_at_center() {
    // Node stays at the region center (zero speed, no noise); the Kalman
    // prior is centered there, so the first estimate is exact.
    let mut c = small();
    c.mobility.v_min = 0.0;
    c.mobility.v_max = 0.0;
    c.mobility.num_steps = 1;
    c.measurement_noise_var = 0.0;
    c.process_noise_var = 0.0;
    c.filter.model_measurement_var = Some(1.0);
    let r = run_round(&c, FilterKind::Ekf, 3).unwrap();
    assert_eq!(r.errors.len(), 1);
    assert!(r.rmse < 1e-9, "{}", r.rmse);
}

#[test]
fn csv_outputs_carry_header() {
    let c = small();
    let header = OutputHeader {
        config_hash: c.hash(),
        seed: c.seed,
        overrides: vec!["mobility.v_max=5".into()],
    };
    let round = run_round(&c, FilterKind::Pf, 1).unwrap();
    let mut buf = Vec::new();
    write_trace(&mut buf, &header, &round).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], format!("# config_hash: {}", c.hash()));
    assert_eq!(lines[1], format!("# seed: {}", c.seed));
    assert_eq!(lines[2], "# overrides: mobility.v_max=5");
    assert_eq!(lines.iter().filter(|l| !l.starts_with('#')).count(), 16);

    let reports = vec![run_experiment(&c, FilterKind::Ekf).unwrap()];
    let mut buf = Vec::new();
    write_rounds(&mut buf, &header, &reports).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3 + 1 + 6);
    let mut buf = Vec::new();
    write_summary(&mut buf, &header, &reports).unwrap();
    assert!(String::from_utf8(buf)
        .unwrap()
        .lines()
        .last()
        .unwrap()
        .starts_with("ekf,"));
    let mut buf = Vec::new();
    write_sweep_long(&mut buf, &header, "particles", &[50], &reports).unwrap();
    assert!(String::from_utf8(buf)
        .unwrap()
        .contains("parameter_value,round,rmse\n50,0,"));
}
