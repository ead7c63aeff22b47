//! Ground-truth motion of the mobile node.
//!
//! Time is cut into equal segments of length `delta_t`. Within a segment the
//! node moves in a straight line at constant speed; at each boundary it turns
//! instantly and draws a fresh speed from U[v_min, v_max]. Position also
//! picks up isotropic Gaussian noise every step:
//!
//! ```text
//! x_k = x_{k-1} + v_k * delta_t + eps_k,   eps_k ~ N(0, sigma^2 I)
//! ```

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Position2D;

/// How the heading evolves between segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadingLaw {
    /// Uniform on (-pi, pi] at every segment boundary.
    #[default]
    UniformResample,
    /// Heading drawn once at the start and kept; only speed changes.
    FixedHeading,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity {
    /// m/s
    pub speed: f64,
    /// radians, (-pi, pi]
    pub heading: f64,
}

impl Velocity {
    pub fn new(speed: f64, heading: f64) -> Self {
        Self { speed, heading }
    }

    /// Displacement over `dt` seconds.
    pub fn displacement(&self, dt: f64) -> (f64, f64) {
        let step = self.speed * dt;
        (step * self.heading.cos(), step * self.heading.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityConfig {
    pub v_min: f64,
    pub v_max: f64,
    pub delta_t: f64,
    /// Per-axis standard deviation of the position noise, meters.
    pub process_noise_std: f64,
    pub num_steps: usize,
    pub initial_position: Position2D,
    pub heading: HeadingLaw,
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.v_min.is_finite() && self.v_max.is_finite()) || self.v_min < 0.0 {
            return bad(format!(
                "velocity bounds must be finite and v_min >= 0 (got {}, {})",
                self.v_min, self.v_max
            ));
        }
        if self.v_min > self.v_max {
            return bad("v_min exceeds v_max".into());
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return bad(format!("delta_t must be > 0, got {}", self.delta_t));
        }
        if !(self.process_noise_std >= 0.0 && self.process_noise_std.is_finite()) {
            return bad(format!(
                "process noise std must be >= 0, got {}",
                self.process_noise_std
            ));
        }
        self.initial_position.check_finite()
    }
}

/// Position and the velocity the node will hold over the next segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState {
    pub position: Position2D,
    pub velocity: Velocity,
    pub step: usize,
}

pub fn sample_speed(config: &MobilityConfig, rng: &mut dyn RngCore) -> f64 {
    if config.v_min == config.v_max {
        return config.v_min;
    }
    let u: f64 = rng.random();
    config.v_min + u * (config.v_max - config.v_min)
}

pub fn sample_heading(rng: &mut dyn RngCore) -> f64 {
    // (-pi, pi]: reflect the half-open [0, 1) draw.
    let u: f64 = rng.random();
    let h = PI - u * 2.0 * PI;
    if h > -PI {
        h
    } else {
        PI
    }
}

pub fn sample_velocity(config: &MobilityConfig, rng: &mut dyn RngCore) -> Velocity {
    let speed = sample_speed(config, rng);
    let heading = sample_heading(rng);
    Velocity::new(speed, heading)
}

/// Advances one segment: moves by the state's velocity plus noise, then picks
/// the velocity for the following segment.
pub fn propagate(state: &NodeState, config: &MobilityConfig, rng: &mut dyn RngCore) -> NodeState {
    let (dx, dy) = state.velocity.displacement(config.delta_t);
    let nx: f64 = rng.sample(StandardNormal);
    let ny: f64 = rng.sample(StandardNormal);
    let position = Position2D::new(
        state.position.x + dx + config.process_noise_std * nx,
        state.position.y + dy + config.process_noise_std * ny,
    );
    let velocity = match config.heading {
        HeadingLaw::UniformResample => sample_velocity(config, rng),
        HeadingLaw::FixedHeading => {
            Velocity::new(sample_speed(config, rng), state.velocity.heading)
        }
    };
    NodeState {
        position,
        velocity,
        step: state.step + 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `num_steps + 1` states; index 0 is the initial state.
    pub states: Vec<NodeState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// CSV with columns `step,x,y,speed,heading`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,x,y,speed,heading")?;
        for s in &self.states {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.step, s.position.x, s.position.y, s.velocity.speed, s.velocity.heading
            )?;
        }
        Ok(())
    }
}

pub fn generate_trajectory(config: &MobilityConfig, rng: &mut dyn RngCore) -> Result<Trajectory> {
    config.validate()?;
    let first = NodeState {
        position: config.initial_position,
        velocity: sample_velocity(config, rng),
        step: 0,
    };
    let mut states = Vec::with_capacity(config.num_steps + 1);
    states.push(first);
    for _ in 0..config.num_steps {
        let next = propagate(states.last().unwrap(), config, rng);
        states.push(next);
    }
    Ok(Trajectory { states })
}

#[cfg(test)]
fn heading_in_range(h: f64) -> bool {
    h > -PI && h <= PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config() -> MobilityConfig {
        MobilityConfig {
            v_min: 1.0,
            v_max: 5.0,
            delta_t: 1.0,
            process_noise_std: 0.0,
            num_steps: 50,
            initial_position: Position2D::new(50.0, 50.0),
            heading: HeadingLaw::UniformResample,
        }
    }

    #[test]
    fn degenerate_speed_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = MobilityConfig {
            v_min: 3.0,
            v_max: 3.0,
            ..config()
        };
        for _ in 0..100 {
            assert_eq!(sample_velocity(&cfg, &mut rng).speed, 3.0);
        }
    }

    #[test]
    fn speed_law_moments_and_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = config();
        let n = 1_000_000;
        let (mut sum, mut lo, mut hi) = (0.0, f64::MAX, f64::MIN);
        for _ in 0..n {
            let v = sample_velocity(&cfg, &mut rng);
            assert!(heading_in_range(v.heading));
            sum += v.speed;
            lo = lo.min(v.speed);
            hi = hi.max(v.speed);
        }
        assert!((sum / n as f64 - 3.0).abs() < 0.01);
        assert!(lo >= 1.0 && hi <= 5.0);
    }

    #[test]
    fn propagate_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = NodeState {
            position: Position2D::new(0.0, 0.0),
            velocity: Velocity::new(2.0, 0.0),
            step: 0,
        };
        let next = propagate(&state, &config(), &mut rng);
        assert_eq!(next.position, Position2D::new(2.0, 0.0));
        assert_eq!(next.step, 1);

        let cfg = MobilityConfig {
            delta_t: 0.5,
            ..config()
        };
        let state = NodeState {
            position: Position2D::new(1.0, 1.0),
            velocity: Velocity::new(5.0, PI / 2.0),
            step: 0,
        };
        let next = propagate(&state, &cfg, &mut rng);
        assert!((next.position.x - 1.0).abs() < 1e-15);
        assert!((next.position.y - 3.5).abs() < 1e-15);
    }

    #[test]
    fn propagate_noise_is_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = MobilityConfig {
            process_noise_std: 1.0,
            ..config()
        };
        let state = NodeState {
            position: Position2D::new(0.0, 0.0),
            velocity: Velocity::new(2.0, 0.7),
            step: 0,
        };
        let (ex, ey) = state.velocity.displacement(1.0);
        let n = 1_000_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let next = propagate(&state, &cfg, &mut rng);
            sx += next.position.x;
            sy += next.position.y;
        }
        assert!((sx / n as f64 - ex).abs() < 0.01);
        assert!((sy / n as f64 - ey).abs() < 0.01);
    }

    #[test]
    fn trajectory_shape_and_determinism() {
        let cfg = MobilityConfig {
            num_steps: 0,
            ..config()
        };
        let t = generate_trajectory(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.states[0].position, cfg.initial_position);

        let a = generate_trajectory(&config(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_trajectory(&config(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 51);
    }

    #[test]
    fn noiseless_segments_within_speed_support() {
        let cfg = config();
        let t = generate_trajectory(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for w in t.states.windows(2) {
            let step = w[0].position.distance(&w[1].position);
            assert!(step >= cfg.v_min * cfg.delta_t - 1e-12);
            assert!(step <= cfg.v_max * cfg.delta_t + 1e-12);
            let (dx, dy) = w[0].velocity.displacement(cfg.delta_t);
            assert!((w[1].position.x - w[0].position.x - dx).abs() < 1e-12);
            assert!((w[1].position.y - w[0].position.y - dy).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_heading_keeps_direction() {
        let cfg = MobilityConfig {
            heading: HeadingLaw::FixedHeading,
            ..config()
        };
        let t = generate_trajectory(&cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let h0 = t.states[0].velocity.heading;
        assert!(t.states.iter().all(|s| s.velocity.heading == h0));
    }

    #[test]
    fn validation_messages() {
        let cfg = MobilityConfig {
            v_min: 6.0,
            ..config()
        };
        assert_eq!(
            cfg.validate().unwrap_err(),
            Error::Config("v_min exceeds v_max".into())
        );
        let cfg = MobilityConfig {
            delta_t: 0.0,
            ..config()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_header() {
        let t = generate_trajectory(
            &MobilityConfig {
                num_steps: 2,
                ..config()
            },
            &mut ChaCha8Rng::seed_from_u64(7),
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,x,y,speed,heading\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
