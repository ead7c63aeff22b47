//! Simulation and tracking of a mobile node from range-difference
//! measurements against fixed anchors.
//!
//! The crate is organized bottom-up: [`geometry`] and [`measurement`]
//! describe what the anchors observe, [`mobility`] moves the node,
//! [`filters`] estimates its position, [`resampling`] supports the particle
//! filters, and [`harness`] runs seeded Monte Carlo experiments.

pub mod error;
pub mod filters;
pub mod geometry;
pub mod harness;
pub mod measurement;
pub mod mobility;
pub mod resampling;
pub mod rng;

pub use error::{Error, Result};
pub use filters::{filter_init, FilterConfig, FilterEstimate, FilterHandle, FilterKind};
pub use geometry::{AnchorSet, Position2D, Region};
pub use harness::{run_experiment, run_round, ScenarioConfig};
