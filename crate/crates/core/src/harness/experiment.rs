use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{Layout, ScenarioConfig};
use super::stats::{confidence_interval, mean, rmse, sample_variance};
use crate::error::{Error, Result};
use crate::filters::{filter_init, FilterKind};
use crate::geometry::{AnchorSet, Position2D};
use crate::measurement::{generate_tdoa, TdoaMeasurement};
use crate::mobility::{generate_trajectory, Trajectory};
use crate::rng::{round_seed, stream_rng, Stream};

/// Ground truth of one round: it depends on the scenario and the round seed
/// only, never on the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTruth {
    pub anchors: AnchorSet,
    pub trajectory: Trajectory,
    /// `measurements[k - 1]` observes `trajectory.states[k]`.
    pub measurements: Vec<TdoaMeasurement>,
}

pub fn simulate_truth(config: &ScenarioConfig, round_seed: u64) -> Result<RoundTruth> {
    let anchors = config.anchor_set()?;
    let mobility = config.mobility_config()?;
    let trajectory =
        generate_trajectory(&mobility, &mut stream_rng(round_seed, Stream::Trajectory))?;
    let sigma = config.measurement_noise_var.sqrt();
    let mut rng = stream_rng(round_seed, Stream::Measurement);
    let measurements = trajectory.states[1..]
        .iter()
        .map(|s| generate_tdoa(&s.position, &anchors, sigma, &mut rng))
        .collect::<Result<_>>()?;
    Ok(RoundTruth {
        anchors,
        trajectory,
        measurements,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub truth: Position2D,
    pub estimate: Position2D,
    pub error: f64,
    pub n_eff: Option<f64>,
    pub resampled: Option<bool>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub filter: FilterKind,
    pub round_seed: u64,
    /// Position error magnitude at steps 1..=T.
    pub errors: Vec<f64>,
    pub rmse: f64,
    pub trace: Vec<StepRecord>,
}

impl RoundResult {
    pub fn degenerate_steps(&self) -> usize {
        self.trace.iter().filter(|r| r.degenerate).count()
    }
}

/// One seeded round: trajectory, measurements, and a predict/update pass
/// of `kind` over steps 1..=T. The predict step at `k` receives the velocity
/// the node held over segment `k - 1 -> k`.
pub fn run_round(
    config: &ScenarioConfig,
    kind: FilterKind,
    round_seed: u64,
) -> Result<RoundResult> {
    let truth = simulate_truth(config, round_seed)?;
    run_round_on(config, kind, round_seed, &truth)
}

pub fn run_round_on(
    config: &ScenarioConfig,
    kind: FilterKind,
    round_seed: u64,
    truth: &RoundTruth,
) -> Result<RoundResult> {
    let mut rng = stream_rng(round_seed, Stream::Filter);
    let mut filter = filter_init(kind, &truth.anchors, &config.filter_config(), &mut rng)?;
    let states = &truth.trajectory.states;
    let dt = config.mobility.delta_t;
    let mut trace = Vec::with_capacity(truth.measurements.len());
    for (k, z) in truth
        .measurements
        .iter()
        .enumerate()
        .map(|(i, z)| (i + 1, z))
    {
        filter.predict(Some(states[k - 1].velocity), dt, &mut rng);
        let est = filter.update_tdoa(z, &mut rng)?;
        let actual = states[k].position;
        trace.push(StepRecord {
            step: k,
            truth: actual,
            estimate: est.position,
            error: est.position.distance(&actual),
            n_eff: est.n_eff,
            resampled: est.resampled,
            degenerate: est.degenerate,
        });
    }
    let errors: Vec<f64> = trace.iter().map(|r| r.error).collect();
    Ok(RoundResult {
        filter: kind,
        round_seed,
        rmse: rmse(&errors),
        errors,
        trace,
    })
}

/// How rounds are scheduled. Results never depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Serial,
    /// Worker thread count; 0 lets the pool decide.
    Parallel(usize),
}

impl Execution {
    fn map_rounds<T: Send>(
        &self,
        rounds: usize,
        f: impl Fn(usize) -> Result<T> + Sync + Send,
    ) -> Result<Vec<T>> {
        match *self {
            Self::Serial | Self::Parallel(1) => (0..rounds).map(f).collect(),
            Self::Parallel(threads) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                // Indexed collect keeps round order.
                pool.install(|| (0..rounds).into_par_iter().map(f).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub filter: FilterKind,
    pub seed: u64,
    pub rounds: usize,
    pub round_seeds: Vec<u64>,
    pub rmse: Vec<f64>,
    pub mean: f64,
    /// Unbiased (n - 1) estimator.
    pub variance: f64,
    /// Set when a single round leaves the variance undefined; it is then 0.
    pub variance_degenerate: bool,
    /// Rounds in which at least one update underflowed all weights.
    pub degenerate_rounds: usize,
    pub config_hash: String,
    pub config: ScenarioConfig,
}

impl RmseReport {
    fn from_rounds(config: &ScenarioConfig, kind: FilterKind, results: &[RoundResult]) -> Self {
        let config = config.with_filter(kind);
        let rmse: Vec<f64> = results.iter().map(|r| r.rmse).collect();
        Self {
            filter: kind,
            seed: config.seed,
            rounds: results.len(),
            round_seeds: results.iter().map(|r| r.round_seed).collect(),
            mean: mean(&rmse),
            variance: sample_variance(&rmse),
            variance_degenerate: results.len() < 2,
            degenerate_rounds: results.iter().filter(|r| r.degenerate_steps() > 0).count(),
            config_hash: config.hash(),
            config,
            rmse,
        }
    }

    pub fn confidence_interval(&self, level: f64) -> (f64, f64) {
        confidence_interval(&self.rmse, level)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn run_experiment(config: &ScenarioConfig, kind: FilterKind) -> Result<RmseReport> {
    run_experiment_with(config, kind, Execution::Serial)
}

/// `config.rounds` rounds with seeds `round_seed(config.seed, r)`.
pub fn run_experiment_with(
    config: &ScenarioConfig,
    kind: FilterKind,
    execution: Execution,
) -> Result<RmseReport> {
    let config = config.with_filter(kind);
    config.validate()?;
    let results = execution.map_rounds(config.rounds, |r| {
        run_round(&config, kind, round_seed(config.seed, r as u64))
    })?;
    Ok(RmseReport::from_rounds(&config, kind, &results))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Particles,
    Anchors,
    Steps,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 3] = [Self::Particles, Self::Anchors, Self::Steps];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Particles => "particles",
            Self::Anchors => "anchors",
            Self::Steps => "steps",
        }
    }

    pub fn get(&self, config: &ScenarioConfig) -> usize {
        match self {
            Self::Particles => config.filter.particles,
            Self::Anchors => config.anchors.count,
            Self::Steps => config.mobility.num_steps,
        }
    }

    /// Copy of `config` with this parameter set to `value`, validated.
    pub fn apply(&self, config: &ScenarioConfig, value: usize) -> Result<ScenarioConfig> {
        let mut c = config.clone();
        match self {
            Self::Particles => c.filter.particles = value,
            Self::Anchors => {
                if c.anchors.layout == Layout::Manual {
                    return Err(Error::Config(
                        "cannot sweep anchors with a manual layout".into(),
                    ));
                }
                c.anchors.count = value;
            }
            Self::Steps => c.mobility.num_steps = value,
        }
        c.validate()
            .map_err(|e| Error::Config(format!("{} = {value}: {e}", self.name())))?;
        Ok(c)
    }
}

impl std::fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown sweep parameter '{s}' (valid: particles, anchors, steps)"
                ))
            })
    }
}

/// One experiment per value with the master seed shared, so rounds are
/// paired across values. All values are validated before any run starts.
pub fn sweep(
    config: &ScenarioConfig,
    parameter: SweepParameter,
    values: &[usize],
    execution: Execution,
) -> Result<Vec<RmseReport>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| parameter.apply(config, v))
        .collect::<Result<Vec<_>>>()?;
    configs
        .iter()
        .map(|c| run_experiment_with(c, c.filter.kind, execution))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig::defaults();
        c.rounds = 4;
        c.mobility.num_steps = 10;
        c
    }

    #[test]
    fn round_is_deterministic_and_rmse_consistent() {
        let c = small();
        for kind in FilterKind::ALL {
            let a = run_round(&c, kind, 99).unwrap();
            assert_eq!(a, run_round(&c, kind, 99).unwrap());
            assert_eq!(a.trace.len(), 10);
            let recomputed = (a.trace.iter().map(|r| r.error * r.error).sum::<f64>() / 10.0).sqrt();
            assert!((a.rmse - recomputed).abs() < 1e-12);
        }
    }

    #[test]
    fn truth_independent_of_filter_settings() {
        let c = small();
        let mut d = c.clone();
        d.filter.particles = 200;
        d.filter.kind = FilterKind::Ekf;
        assert_eq!(
            simulate_truth(&c, 5).unwrap(),
            simulate_truth(&d, 5).unwrap()
        );
    }

    #[test]
    fn single_round_report() {
        let mut c = small();
        c.rounds = 1;
        let r = run_experiment(&c, FilterKind::Ekf).unwrap();
        assert_eq!(r.variance, 0.0);
        assert!(r.variance_degenerate);
        assert_eq!(r.mean, r.rmse[0]);
    }

    #[test]
    fn parallel_matches_serial() {
        let c = small();
        let serial = run_experiment(&c, FilterKind::Pf).unwrap();
        let parallel = run_experiment_with(&c, FilterKind::Pf, Execution::Parallel(3)).unwrap();
        assert_eq!(serial.to_json(), parallel.to_json());
    }

    #[test]
    fn sweep_validation() {
        let c = small();
        assert!(sweep(&c, SweepParameter::Anchors, &[], Execution::Serial).is_err());
        assert!(sweep(&c, SweepParameter::Anchors, &[6, 2], Execution::Serial).is_err());
        assert!("speed"
            .parse::<SweepParameter>()
            .unwrap_err()
            .to_string()
            .contains("particles, anchors, steps"));
        let one = sweep(&c, SweepParameter::Particles, &[50], Execution::Serial).unwrap();
        assert_eq!(one[0], run_experiment(&c, c.filter.kind).unwrap());
    }
}
