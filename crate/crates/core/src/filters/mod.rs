//! Recursive position estimators behind one handle: EKF, UKF, a generic
//! bootstrap particle filter, and the PF-TDOA variant.
//!
//! All four share the motion model
//!
//! ```text
//! x_k = x_{k-1} + v_k * dt + eps_k,   eps_k ~ N(0, q I)
//! ```
//!
//! and differ in what they know about `v_k`:
//!
//! * `pf_tdoa` propagates particles with the node's own commanded velocity.
//! * `ekf` and `ukf` shift the mean by the same commanded displacement and
//!   grow the covariance by `q I`; with no command the mean is held.
//! * `pf` draws a velocity per particle from the mobility prior
//!   (speed U[v_min, v_max], heading uniform) and ignores the command.
//!
//! `q` is the conventional process variance (called "R" in some parameter
//! tables, which swap the usual Q/R names).

mod kalman;
mod model;
mod particle;

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use kalman::{ExtendedKalmanFilter, UkfParams, UnscentedKalmanFilter};
pub use model::{LinearModel, MeasurementModel, TdoaModel};
pub use particle::{ParticleFilter, ParticleSet, Proposal};

use crate::error::{Error, Result};
use crate::geometry::{AnchorSet, Position2D, Region};
use crate::measurement::{NoiseModel, TdoaMeasurement};
use crate::mobility::Velocity;
use crate::resampling::ResamplingScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Ekf,
    Ukf,
    Pf,
    PfTdoa,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [Self::Ekf, Self::Ukf, Self::Pf, Self::PfTdoa];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ekf => "ekf",
            Self::Ukf => "ukf",
            Self::Pf => "pf",
            Self::PfTdoa => "pf_tdoa",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Ekf => "EKF",
            Self::Ukf => "UKF",
            Self::Pf => "PF",
            Self::PfTdoa => "PF-TDOA",
        }
    }

    pub fn is_particle(&self) -> bool {
        matches!(self, Self::Pf | Self::PfTdoa)
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ekf" => Ok(Self::Ekf),
            "ukf" => Ok(Self::Ukf),
            "pf" => Ok(Self::Pf),
            "pf_tdoa" => Ok(Self::PfTdoa),
            other => Err(Error::Config(format!(
                "unknown filter '{other}' (expected ekf, ukf, pf, pf_tdoa)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub particles: usize,
    /// Resample when the effective sample size drops below this.
    pub n_threshold: usize,
    /// Per-axis process noise variance q, m^2.
    pub process_var: f64,
    /// Per-anchor range noise variance, m^2.
    pub measurement_var: f64,
    pub noise_model: NoiseModel,
    pub resampling: ResamplingScheme,
    /// Speed bounds for the generic PF's velocity prior.
    pub v_min: f64,
    pub v_max: f64,
    pub ukf: UkfParams,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 50,
            n_threshold: 10,
            process_var: 3.0,
            measurement_var: 1.0,
            noise_model: NoiseModel::Correlated,
            resampling: ResamplingScheme::Residual,
            v_min: 1.0,
            v_max: 5.0,
            ukf: UkfParams::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self, kind: FilterKind) -> Result<()> {
        if !(self.process_var >= 0.0 && self.process_var.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "process variance must be >= 0, got {}",
                self.process_var
            )));
        }
        if !(self.measurement_var > 0.0 && self.measurement_var.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "measurement variance must be > 0, got {}",
                self.measurement_var
            )));
        }
        if kind.is_particle() {
            if self.particles == 0 {
                return Err(Error::InvalidParameter(
                    "particle count must be >= 1".into(),
                ));
            }
            if self.n_threshold > self.particles {
                return Err(Error::InvalidParameter(format!(
                    "resampling threshold {} exceeds particle count {}",
                    self.n_threshold, self.particles
                )));
            }
            if !(0.0 <= self.v_min && self.v_min <= self.v_max && self.v_max.is_finite()) {
                return Err(Error::InvalidParameter("v_min exceeds v_max".into()));
            }
        }
        Ok(())
    }
}

/// Mean and covariance of a position belief.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vector2<f64>,
    pub covariance: Matrix2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Gaussian {
        mean: Vector2<f64>,
        covariance: Matrix2<f64>,
    },
    Uniform(Region),
}

impl Prior {
    /// Default diffuse priors: particle filters start uniform over the anchor
    /// bounding box grown 20% per side; Kalman filters start Gaussian at the
    /// box center with standard deviation equal to half the box diagonal.
    pub fn default_for(kind: FilterKind, anchors: &AnchorSet) -> Prior {
        let bbox = anchors.bounding_box();
        if kind.is_particle() {
            Prior::Uniform(bbox.inflate(0.2))
        } else {
            let std = 0.5 * bbox.diagonal();
            Prior::Gaussian {
                mean: bbox.center().to_vector(),
                covariance: Matrix2::identity() * (std * std),
            }
        }
    }

    /// Moment-matched Gaussian.
    pub fn moments(&self) -> GaussianBelief {
        match *self {
            Prior::Gaussian { mean, covariance } => GaussianBelief { mean, covariance },
            Prior::Uniform(r) => GaussianBelief {
                mean: r.center().to_vector(),
                covariance: Matrix2::new(
                    r.width().powi(2) / 12.0,
                    0.0,
                    0.0,
                    r.height().powi(2) / 12.0,
                ),
            },
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vector2<f64> {
        match *self {
            Prior::Gaussian { mean, covariance } => {
                let l = covariance_sqrt(&covariance);
                let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                mean + l * z
            }
            Prior::Uniform(r) => {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                Vector2::new(r.min.x + u * r.width(), r.min.y + v * r.height())
            }
        }
    }
}

/// Lower-triangular square root of a covariance; falls back to the
/// eigen-decomposition with negative eigenvalues clipped to zero.
pub(crate) fn covariance_sqrt(cov: &Matrix2<f64>) -> Matrix2<f64> {
    if let Some(c) = cov.cholesky() {
        return c.l();
    }
    let eig = SymmetricEigen::new(*cov);
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * Matrix2::from_diagonal(&d)
}

/// Symmetrizes and clips eigenvalues below zero.
pub(crate) fn repair_covariance(cov: &Matrix2<f64>) -> Matrix2<f64> {
    let sym = 0.5 * (cov + cov.transpose());
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|v| *v >= 0.0) {
        return sym;
    }
    let d = eig.eigenvalues.map(|v| v.max(0.0));
    let fixed = eig.eigenvectors * Matrix2::from_diagonal(&d) * eig.eigenvectors.transpose();
    0.5 * (fixed + fixed.transpose())
}

/// Per-step posterior summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterEstimate {
    pub position: Position2D,
    pub covariance: Matrix2<f64>,
    /// Particle filters only.
    pub n_eff: Option<f64>,
    /// Particle filters only: whether the last update resampled.
    pub resampled: Option<bool>,
    /// The last update underflowed every particle weight and fell back to
    /// uniform weights.
    pub degenerate: bool,
}

impl FilterEstimate {
    pub(crate) fn gaussian(belief: &GaussianBelief) -> Self {
        Self {
            position: Position2D::from_vector(&belief.mean),
            covariance: belief.covariance,
            n_eff: None,
            resampled: None,
            degenerate: false,
        }
    }
}

/// Owns all mutable state of one estimator.
#[derive(Debug, Clone)]
pub enum FilterHandle<M> {
    Ekf(ExtendedKalmanFilter<M>),
    Ukf(UnscentedKalmanFilter<M>),
    Particle(ParticleFilter<M>),
}

impl<M: MeasurementModel> FilterHandle<M> {
    pub fn new(
        kind: FilterKind,
        model: M,
        prior: &Prior,
        config: &FilterConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        config.validate(kind)?;
        Ok(match kind {
            FilterKind::Ekf => Self::Ekf(ExtendedKalmanFilter::new(
                model,
                prior.moments(),
                config.process_var,
            )),
            FilterKind::Ukf => Self::Ukf(UnscentedKalmanFilter::new(
                model,
                prior.moments(),
                config.process_var,
                config.ukf,
            )),
            FilterKind::Pf => Self::Particle(ParticleFilter::from_prior(
                model,
                prior,
                config,
                Proposal::VelocityPrior,
                rng,
            )),
            FilterKind::PfTdoa => Self::Particle(ParticleFilter::from_prior(
                model,
                prior,
                config,
                Proposal::Control,
                rng,
            )),
        })
    }

    pub fn kind(&self) -> FilterKind {
        match self {
            Self::Ekf(_) => FilterKind::Ekf,
            Self::Ukf(_) => FilterKind::Ukf,
            Self::Particle(p) => match p.proposal() {
                Proposal::VelocityPrior => FilterKind::Pf,
                Proposal::Control => FilterKind::PfTdoa,
            },
        }
    }

    pub fn model(&self) -> &M {
        match self {
            Self::Ekf(f) => f.model(),
            Self::Ukf(f) => f.model(),
            Self::Particle(f) => f.model(),
        }
    }

    /// Time update over `delta_t` seconds. `control` is the node's commanded
    /// velocity for the segment; the generic `pf` ignores it.
    pub fn predict(&mut self, control: Option<Velocity>, delta_t: f64, rng: &mut dyn RngCore) {
        let kalman_displacement = control.map(|v| {
            let (dx, dy) = v.displacement(delta_t);
            Vector2::new(dx, dy)
        });
        match self {
            Self::Ekf(f) => f.predict(kalman_displacement),
            Self::Ukf(f) => f.predict(kalman_displacement),
            Self::Particle(f) => f.predict(control, delta_t, rng),
        }
    }

    /// Measurement update with a raw observation vector.
    pub fn update(&mut self, z: &[f64], rng: &mut dyn RngCore) -> Result<FilterEstimate> {
        let dim = self.model().dim();
        if z.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: z.len(),
            });
        }
        let z = nalgebra::DVector::from_column_slice(z);
        Ok(match self {
            Self::Ekf(f) => f.update(&z),
            Self::Ukf(f) => f.update(&z),
            Self::Particle(f) => f.update(&z, rng),
        })
    }

    pub fn estimate(&self) -> FilterEstimate {
        match self {
            Self::Ekf(f) => FilterEstimate::gaussian(f.belief()),
            Self::Ukf(f) => FilterEstimate::gaussian(f.belief()),
            Self::Particle(f) => f.estimate(),
        }
    }
}

impl FilterHandle<TdoaModel> {
    pub fn update_tdoa(
        &mut self,
        measurement: &TdoaMeasurement,
        rng: &mut dyn RngCore,
    ) -> Result<FilterEstimate> {
        let expected = self.model().anchors().reference_index();
        if measurement.reference_index != expected {
            return Err(Error::InvalidParameter(format!(
                "measurement uses reference anchor {}, filter expects {expected}",
                measurement.reference_index
            )));
        }
        self.update(&measurement.range_diffs, rng)
    }
}

/// Builds a TDOA estimator with the default prior for `kind`.
pub fn filter_init(
    kind: FilterKind,
    anchors: &AnchorSet,
    config: &FilterConfig,
    rng: &mut dyn RngCore,
) -> Result<FilterHandle<TdoaModel>> {
    config.validate(kind)?;
    let model = TdoaModel::new(anchors.clone(), config.measurement_var, config.noise_model)?;
    let prior = Prior::default_for(kind, anchors);
    FilterHandle::new(kind, model, &prior, config, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn anchors() -> AnchorSet {
        AnchorSet::new(
            (0..6)
                .map(|i| {
                    let a = i as f64 * std::f64::consts::PI / 3.0;
                    Position2D::new(50.0 + 50.0 * a.cos(), 50.0 + 50.0 * a.sin())
                })
                .collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn pf_init_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = filter_init(
            FilterKind::Pf,
            &anchors(),
            &FilterConfig::default(),
            &mut rng,
        )
        .unwrap();
        let FilterHandle::Particle(pf) = &h else {
            panic!()
        };
        let set = pf.particle_set();
        assert_eq!(set.states.len(), 50);
        assert!(set.weights.iter().all(|w| (w - 0.02).abs() < 1e-15));
        let bbox = anchors().bounding_box().inflate(0.2);
        assert!(set.states.iter().all(|p| p.x >= bbox.min.x
            && p.x <= bbox.max.x
            && p.y >= bbox.min.y
            && p.y <= bbox.max.y));
    }

    #[test]
    fn ekf_init_uses_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = anchors();
        let h = filter_init(FilterKind::Ekf, &set, &FilterConfig::default(), &mut rng).unwrap();
        let est = h.estimate();
        let bbox = set.bounding_box();
        assert_eq!(est.position, bbox.center());
        let var = (0.5 * bbox.diagonal()).powi(2);
        assert!((est.covariance[(0, 0)] - var).abs() < 1e-9);
        assert_eq!(est.covariance[(0, 1)], 0.0);
    }

    #[test]
    fn init_rejects_threshold_above_particles() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = FilterConfig {
            particles: 5,
            n_threshold: 10,
            ..FilterConfig::default()
        };
        assert!(filter_init(FilterKind::PfTdoa, &anchors(), &cfg, &mut rng).is_err());
    }

    #[test]
    fn init_rejects_two_anchors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let two = AnchorSet::new(
            vec![Position2D::new(0.0, 0.0), Position2D::new(1.0, 0.0)],
            0,
        )
        .unwrap();
        assert!(filter_init(FilterKind::Ekf, &two, &FilterConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn update_checks_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut h = filter_init(
            FilterKind::Ukf,
            &anchors(),
            &FilterConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(
            h.update(&[0.0; 3], &mut rng).unwrap_err(),
            Error::DimensionMismatch {
                expected: 5,
                actual: 3
            }
        );
    }

    #[test]
    fn kind_round_trip() {
        for kind in FilterKind::ALL {
            assert_eq!(kind.name().parse::<FilterKind>().unwrap(), kind);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let h = filter_init(kind, &anchors(), &FilterConfig::default(), &mut rng).unwrap();
            assert_eq!(h.kind(), kind);
        }
        assert!("kalman".parse::<FilterKind>().is_err());
    }
}
