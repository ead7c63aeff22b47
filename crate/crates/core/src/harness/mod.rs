//! Scenario files, seeded Monte Carlo experiments, parameter sweeps, and a
//! least-squares snapshot baseline.
//!
//! A round draws one trajectory and one measurement sequence, runs one
//! filter over it, and scores the root mean square position error over
//! steps `1..=T`. An experiment repeats this for `rounds` derived seeds (see
//! [`crate::rng`]) and reports the mean and unbiased variance of the
//! per-round scores. Rounds are independent, so parallel and serial runs
//! produce identical reports.

mod experiment;
mod ls;
pub mod output;
mod scenario;
pub mod stats;

pub use experiment::{
    run_experiment, run_experiment_with, run_round, run_round_on, simulate_truth, sweep, Execution,
    RmseReport, RoundResult, RoundTruth, StepRecord, SweepParameter,
};
pub use ls::{ls_tdoa_solve, ls_tdoa_solve_with, LsOptions, LsSolution};
pub use scenario::{
    place_anchors, AnchorSpec, FilterSpec, Layout, MobilitySpec, ScenarioConfig, DEFAULT_SCENARIO,
    DEFAULT_SCENARIO_NAME,
};
