//! Acceptance criteria, each run at its stated tolerance. Every check is a
//! plain function returning a verdict and a one-line summary of the evidence.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use wsnloc::filters::{FilterConfig, FilterHandle, FilterKind, LinearModel, Prior};
use wsnloc::harness::stats::paired_t_test;
use wsnloc::harness::{
    ls_tdoa_solve, run_experiment_with, sweep, Execution, RmseReport, ScenarioConfig,
    SweepParameter,
};
use wsnloc::measurement::{generate_tdoa, tdoa_expected, tdoa_jacobian};
use wsnloc::resampling::{copy_counts, effective_sample_size, ResamplingScheme, WeightVector};
use wsnloc::{AnchorSet, Position2D};

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

const ALPHA: f64 = 0.05;

/// `lower` has a significantly smaller mean than `higher` on paired rounds.
fn significantly_below(lower: &RmseReport, higher: &RmseReport) -> (bool, f64) {
    let t = paired_t_test(&lower.rmse, &higher.rmse);
    (t.mean_difference < 0.0 && t.p_value < ALPHA, t.p_value)
}

pub fn filter_ranking() -> Outcome {
    let config = ScenarioConfig::defaults();
    let reports: Vec<RmseReport> = FilterKind::ALL
        .iter()
        .map(|&k| run_experiment_with(&config, k, Execution::Parallel(0)).expect("experiment runs"))
        .collect();
    let by = |k: FilterKind| reports.iter().find(|r| r.filter == k).unwrap();
    let order = [
        FilterKind::PfTdoa,
        FilterKind::Pf,
        FilterKind::Ukf,
        FilterKind::Ekf,
    ];
    let mut pass = config.rounds >= 200;
    let mut gaps = Vec::new();
    for pair in order.windows(2) {
        let (lo, hi) = (by(pair[0]), by(pair[1]));
        let (ok, p) = significantly_below(lo, hi);
        pass &= ok && lo.variance < hi.variance;
        gaps.push(format!(
            "{}<{} p={p:.3}",
            lo.filter.label(),
            hi.filter.label()
        ));
    }
    let table: Vec<String> = order
        .iter()
        .map(|&k| format!("{} {:.3}/{:.3}", k.label(), by(k).mean, by(k).variance))
        .collect();
    outcome(
        pass,
        format!(
            "{} rounds, mean/var {}; {}",
            config.rounds,
            table.join(", "),
            gaps.join(", ")
        ),
    )
}

fn sweep_check(parameter: SweepParameter, values: &[usize]) -> (bool, String) {
    let config = ScenarioConfig::defaults();
    let reports = sweep(&config, parameter, values, Execution::Parallel(0)).expect("sweep runs");
    let mut pass = config.rounds >= 200;
    let mut parts: Vec<String> = values
        .iter()
        .zip(&reports)
        .map(|(v, r)| format!("{v}:{:.3}", r.mean))
        .collect();
    for (i, w) in reports.windows(2).enumerate() {
        if w[1].mean > w[0].mean {
            // An inversion is tolerated only inside paired-test noise.
            let p = paired_t_test(&w[0].rmse, &w[1].rmse).p_value;
            pass &= p >= ALPHA;
            parts.push(format!(
                "inversion {}->{} p={p:.3}",
                values[i],
                values[i + 1]
            ));
        }
    }
    (pass, format!("{parameter} [{}]", parts.join(" ")))
}

pub fn sweep_monotonicity() -> Outcome {
    let (a, da) = sweep_check(SweepParameter::Particles, &[10, 50, 200]);
    let (b, db) = sweep_check(SweepParameter::Anchors, &[3, 6, 9]);
    outcome(a && b, format!("{da}; {db}"))
}

/// Exact scalar Kalman filter for x_k = x_{k-1} + w, z_k = x_k + v.
struct ScalarKalman {
    mean: f64,
    var: f64,
    q: f64,
    r: f64,
}

impl ScalarKalman {
    fn step(&mut self, z: f64) {
        self.var += self.q;
        let gain = self.var / (self.var + self.r);
        self.mean += gain * (z - self.mean);
        self.var *= 1.0 - gain;
    }
}

pub fn linear_oracle() -> Outcome {
    const STEPS: usize = 100;
    const SEEDS: u64 = 10;
    const PARTICLES: usize = 100_000;
    let (q, r, p0) = (1.0, 1.0, 10.0);
    let model = || {
        LinearModel::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, r),
        )
        .unwrap()
    };
    let prior = Prior::Gaussian {
        mean: Vector2::zeros(),
        covariance: Matrix2::identity() * p0,
    };
    let config = FilterConfig {
        particles: PARTICLES,
        n_threshold: PARTICLES / 2,
        process_var: q,
        measurement_var: r,
        ..FilterConfig::default()
    };

    let (mut ekf_err, mut ukf_err, mut pf_ratio) = (0.0f64, 0.0f64, 0.0f64);
    let mut pf_violations = 0;
    for seed in 0..SEEDS {
        let mut truth_rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut filter_rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let mut exact = ScalarKalman {
            mean: 0.0,
            var: p0,
            q,
            r,
        };
        let mut filters: Vec<FilterHandle<LinearModel>> =
            [FilterKind::Ekf, FilterKind::Ukf, FilterKind::PfTdoa]
                .iter()
                .map(|&k| FilterHandle::new(k, model(), &prior, &config, &mut filter_rng).unwrap())
                .collect();
        let mut x: f64 = truth_rng.sample::<f64, _>(StandardNormal) * p0.sqrt();
        for _ in 0..STEPS {
            x += truth_rng.sample::<f64, _>(StandardNormal) * q.sqrt();
            let z = x + truth_rng.sample::<f64, _>(StandardNormal) * r.sqrt();
            exact.step(z);
            let bound = 3.0 * exact.var.sqrt() / (PARTICLES as f64).sqrt();
            for f in &mut filters {
                // A random walk: no control input.
                f.predict(None, 1.0, &mut filter_rng);
                let est = f.update(&[z], &mut filter_rng).unwrap();
                let dev = (est.position.x - exact.mean).abs();
                match f.kind() {
                    FilterKind::Ekf => {
                        ekf_err = ekf_err
                            .max(dev)
                            .max((est.covariance[(0, 0)] - exact.var).abs());
                    }
                    FilterKind::Ukf => {
                        ukf_err = ukf_err
                            .max(dev)
                            .max((est.covariance[(0, 0)] - exact.var).abs());
                    }
                    _ => {
                        pf_ratio = pf_ratio.max(dev / bound);
                        pf_violations += usize::from(dev > bound);
                    }
                }
            }
        }
    }
    let pass = ekf_err <= 1e-9 && ukf_err <= 1e-6 && pf_violations == 0;
    outcome(
        pass,
        format!(
            "EKF max dev {ekf_err:.2e} (tol 1e-9), UKF {ukf_err:.2e} (tol 1e-6), PF worst |dev|/(3 sd/sqrt N) = {pf_ratio:.2}, {pf_violations}/{} steps outside",
            STEPS as u64 * SEEDS
        ),
    )
}

fn random_anchors(rng: &mut ChaCha8Rng, count: usize) -> AnchorSet {
    let pts = (0..count)
        .map(|_| Position2D::new(rng.random::<f64>() * 100.0, rng.random::<f64>() * 100.0))
        .collect();
    AnchorSet::new(pts, 0).expect("distinct random anchors")
}

pub fn jacobian_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let count = rng.random_range(3..10);
        let anchors = random_anchors(&mut rng, count);
        let x = loop {
            let p = Position2D::new(
                rng.random::<f64>() * 120.0 - 10.0,
                rng.random::<f64>() * 120.0 - 10.0,
            );
            if anchors.positions().iter().all(|a| a.distance(&p) > 1.0) {
                break p;
            }
        };
        let analytic = tdoa_jacobian(&x, &anchors);
        let h = 1e-5;
        let mut numeric = DMatrix::zeros(analytic.nrows(), 2);
        for axis in 0..2 {
            let shift = |s: f64| {
                let mut p = x;
                if axis == 0 {
                    p.x += s;
                } else {
                    p.y += s;
                }
                DVector::from_vec(tdoa_expected(&p, &anchors))
            };
            numeric.set_column(axis, &((shift(h) - shift(-h)) / (2.0 * h)));
        }
        let scale = analytic.amax().max(f64::MIN_POSITIVE);
        worst = worst.max((&analytic - &numeric).amax() / scale);
    }
    outcome(
        worst < 1e-6,
        format!("max relative error {worst:.2e} over 100 states (tol 1e-6)"),
    )
}

pub fn resampling_check() -> Outcome {
    const RUNS: usize = 100_000;
    let vectors: Vec<Vec<f64>> = vec![
        vec![0.5, 0.3, 0.2],
        vec![0.25; 4],
        vec![0.1, 0.2, 0.3, 0.4],
        vec![0.05, 0.05, 0.1, 0.2, 0.25, 0.35],
        (1..=8).map(|i| i as f64 / 36.0).collect(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pass = true;
    let mut worst_bias = 0.0f64;
    let mut floor_violations = 0usize;
    let mut variance_notes = Vec::new();
    for raw in &vectors {
        let w = WeightVector::new(raw.clone()).unwrap();
        let n = w.len();
        let expected: Vec<f64> = raw.iter().map(|wi| n as f64 * wi).collect();
        let mut total_var = Vec::new();
        for scheme in [
            ResamplingScheme::Residual,
            ResamplingScheme::Systematic,
            ResamplingScheme::Multinomial,
        ] {
            let mut sum = vec![0.0; n];
            let mut sum_sq = vec![0.0; n];
            for _ in 0..RUNS {
                let counts = copy_counts(&scheme.resample(&w, &mut rng), n);
                for i in 0..n {
                    let c = counts[i] as f64;
                    sum[i] += c;
                    sum_sq[i] += c * c;
                    if scheme == ResamplingScheme::Residual
                        && counts[i] < expected[i].floor() as usize
                    {
                        floor_violations += 1;
                    }
                }
            }
            let mut var = 0.0;
            for i in 0..n {
                let mean = sum[i] / RUNS as f64;
                let bias = (mean - expected[i]).abs() / expected[i];
                worst_bias = worst_bias.max(bias);
                pass &= bias <= 0.01;
                var += sum_sq[i] / RUNS as f64 - mean * mean;
            }
            total_var.push(var);
        }
        pass &= total_var[0] <= total_var[2];
        variance_notes.push(format!("{:.3}<={:.3}", total_var[0], total_var[2]));
    }
    pass &= floor_violations == 0;
    outcome(
        pass,
        format!(
            "worst relative bias {worst_bias:.4} (tol 0.01), floor violations {floor_violations}, residual vs multinomial total variance [{}]",
            variance_notes.join(" ")
        ),
    )
}

pub fn ess_contract() -> Outcome {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 2000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let bounds = runner.run(&prop::collection::vec(0.0f64..1.0, 1..500), |raw| {
        prop_assume!(raw.iter().sum::<f64>() > 1e-9);
        let w = WeightVector::normalized(raw).unwrap();
        let ess = effective_sample_size(&w);
        prop_assert!((1.0..=w.len() as f64).contains(&ess));
        Ok(())
    });
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 500,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let equality = runner.run(&(1usize..5000, any::<prop::sample::Index>()), |(n, idx)| {
        prop_assert!((effective_sample_size(&WeightVector::uniform(n)) - n as f64).abs() <= 1e-9);
        let mut point = vec![0.0; n];
        point[idx.index(n)] = 1.0;
        prop_assert!(
            (effective_sample_size(&WeightVector::new(point).unwrap()) - 1.0).abs() <= 1e-9
        );
        Ok(())
    });
    let pass = bounds.is_ok() && equality.is_ok();
    let detail = match (bounds, equality) {
        (Ok(()), Ok(())) => {
            "2000 random vectors within [1, N]; uniform and point-mass cases exact".to_string()
        }
        (b, e) => format!("bounds: {b:?}; equality: {e:?}"),
    };
    outcome(pass, detail)
}

pub fn noiseless_end_to_end() -> Outcome {
    let mut config = ScenarioConfig::defaults();
    config.measurement_noise_var = 0.0;
    config.process_noise_var = 0.0;
    // The filter still needs a proper likelihood and some particle spread.
    config.filter.model_measurement_var = Some(1e-2);
    config.filter.model_process_var = Some(1e-2);
    config.filter.particles = 100_000;
    config.filter.n_threshold = 50_000;
    config.rounds = 10;
    let report = run_experiment_with(&config, FilterKind::PfTdoa, Execution::Parallel(0))
        .expect("experiment runs");
    let worst = report.rmse.iter().copied().fold(0.0, f64::max);
    outcome(
        worst < 0.1,
        format!(
            "PF-TDOA, {} particles, T={}: worst RMSE over {} rounds {worst:.4} m (tol 0.1)",
            config.filter.particles, config.mobility.num_steps, config.rounds
        ),
    )
}

pub fn ls_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut recovered, mut flagged, mut silent, mut tried) = (0, 0, 0, 0);
    while tried < 1000 {
        let anchors = random_anchors(&mut rng, 6);
        let source = Position2D::new(rng.random::<f64>() * 100.0, rng.random::<f64>() * 100.0);
        // Non-degenerate: the geometry determines the source locally.
        let j = tdoa_jacobian(&source, &anchors);
        let info = j.transpose() * &j;
        let eig = info.symmetric_eigenvalues();
        if eig.min() < 1e-3 * eig.max()
            || anchors
                .positions()
                .iter()
                .any(|a| a.distance(&source) < 1.0)
        {
            continue;
        }
        tried += 1;
        let z = generate_tdoa(&source, &anchors, 0.0, &mut rng).unwrap();
        let sol = ls_tdoa_solve(&z, &anchors, anchors.centroid()).unwrap();
        if sol.position.distance(&source) < 1e-6 {
            recovered += 1;
        } else if !sol.converged {
            flagged += 1;
        } else {
            silent += 1;
        }
    }
    outcome(
        recovered >= 990 && silent == 0,
        format!("{recovered}/1000 recovered within 1e-6 m, {flagged} flagged non-converged, {silent} silently wrong"),
    )
}

pub fn determinism() -> Outcome {
    let mut config = ScenarioConfig::defaults();
    config.rounds = 40;
    let mut pass = true;
    for seed in [1u64, 987_654_321] {
        config.seed = seed;
        for kind in FilterKind::ALL {
            let serial = run_experiment_with(&config, kind, Execution::Serial)
                .unwrap()
                .to_json();
            let again = run_experiment_with(&config, kind, Execution::Serial)
                .unwrap()
                .to_json();
            let par4 = run_experiment_with(&config, kind, Execution::Parallel(4))
                .unwrap()
                .to_json();
            let par = run_experiment_with(&config, kind, Execution::Parallel(0))
                .unwrap()
                .to_json();
            pass &= serial == again && serial == par4 && serial == par;
        }
    }
    outcome(
        pass,
        "2 seeds x 4 filters: serial, repeated serial, 4 threads and default pool byte-identical",
    )
}

/// All criteria in order, with short names.
pub fn criteria() -> [(&'static str, fn() -> Outcome); 9] {
    [
        ("filter ranking", filter_ranking),
        ("sweep monotonicity", sweep_monotonicity),
        ("linear-Gaussian oracle", linear_oracle),
        ("jacobian check", jacobian_check),
        ("resampling unbiasedness and floor", resampling_check),
        ("effective sample size contract", ess_contract),
        ("noiseless end-to-end", noiseless_end_to_end),
        ("least-squares solver", ls_solver),
        ("determinism", determinism),
    ]
}
