use nalgebra::{DVector, Matrix2, Vector2};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{FilterConfig, FilterEstimate, MeasurementModel, Prior};
use crate::geometry::Position2D;
use crate::mobility::{sample_heading, Velocity};
use crate::resampling::{effective_sample_size, ResamplingScheme, WeightVector};

/// Where particle displacements come from in the time update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proposal {
    /// Each particle draws its own velocity from the mobility prior.
    VelocityPrior,
    /// All particles move by the commanded velocity (PF-TDOA).
    Control,
}

/// Weighted particle snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub states: Vec<Position2D>,
    /// Normalized.
    pub weights: Vec<f64>,
}

/// Sequential importance resampling filter over planar positions.
///
/// Weights are kept in the log domain and normalized after every update.
#[derive(Debug, Clone)]
pub struct ParticleFilter<M> {
    model: M,
    particles: Vec<Vector2<f64>>,
    log_weights: Vec<f64>,
    proposal: Proposal,
    process_std: f64,
    n_threshold: usize,
    resampling: ResamplingScheme,
    v_min: f64,
    v_max: f64,
    last_resampled: bool,
    last_degenerate: bool,
}

impl<M: MeasurementModel> ParticleFilter<M> {
    pub fn from_prior(
        model: M,
        prior: &Prior,
        config: &FilterConfig,
        proposal: Proposal,
        rng: &mut dyn RngCore,
    ) -> Self {
        let particles = (0..config.particles).map(|_| prior.sample(rng)).collect();
        Self::with_particles(model, particles, config, proposal)
    }

    /// Starts from explicit equally weighted particles.
    pub fn with_particles(
        model: M,
        particles: Vec<Vector2<f64>>,
        config: &FilterConfig,
        proposal: Proposal,
    ) -> Self {
        assert!(
            !particles.is_empty(),
            "particle filter needs at least one particle"
        );
        let n = particles.len();
        Self {
            model,
            particles,
            log_weights: vec![-(n as f64).ln(); n],
            proposal,
            process_std: config.process_var.sqrt(),
            n_threshold: config.n_threshold,
            resampling: config.resampling,
            v_min: config.v_min,
            v_max: config.v_max,
            last_resampled: false,
            last_degenerate: false,
        }
    }

    /// Starts from an explicit weighted set. Weights are renormalized.
    pub fn from_particle_set(
        model: M,
        set: &ParticleSet,
        config: &FilterConfig,
        proposal: Proposal,
    ) -> Self {
        let particles = set.states.iter().map(|p| p.to_vector()).collect();
        let mut pf = Self::with_particles(model, particles, config, proposal);
        let total: f64 = set.weights.iter().sum();
        pf.log_weights = set.weights.iter().map(|w| (w / total).ln()).collect();
        pf
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn proposal(&self) -> Proposal {
        self.proposal
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    pub fn particle_set(&self) -> ParticleSet {
        ParticleSet {
            states: self.particles.iter().map(Position2D::from_vector).collect(),
            weights: self.weights(),
        }
    }

    pub fn predict(&mut self, control: Option<Velocity>, delta_t: f64, rng: &mut dyn RngCore) {
        let std = self.process_std;
        match self.proposal {
            Proposal::Control => {
                let (dx, dy) = control.map_or((0.0, 0.0), |v| v.displacement(delta_t));
                let shift = Vector2::new(dx, dy);
                for p in &mut self.particles {
                    *p += shift + gaussian_pair(rng) * std;
                }
            }
            Proposal::VelocityPrior => {
                let span = self.v_max - self.v_min;
                for p in &mut self.particles {
                    let u: f64 = rng.random();
                    let v = Velocity::new(self.v_min + u * span, sample_heading(rng));
                    let (dx, dy) = v.displacement(delta_t);
                    *p += Vector2::new(dx, dy) + gaussian_pair(rng) * std;
                }
            }
        }
    }

    /// Reweights by the measurement likelihood, resamples when the effective
    /// sample size falls below the threshold, and returns the weighted
    /// estimate taken before resampling.
    pub fn update(&mut self, z: &DVector<f64>, rng: &mut dyn RngCore) -> FilterEstimate {
        for (lw, p) in self.log_weights.iter_mut().zip(&self.particles) {
            let ll = self.model.log_likelihood(z, p);
            *lw += if ll.is_nan() { f64::NEG_INFINITY } else { ll };
        }
        self.last_degenerate = !self.normalize();

        let mut est = self.estimate();
        let n_eff = est.n_eff.unwrap_or(1.0);
        self.last_resampled = n_eff < self.n_threshold as f64;
        if self.last_resampled {
            self.resample(rng);
        }
        est.resampled = Some(self.last_resampled);
        est.degenerate = self.last_degenerate;
        est
    }

    /// Shifts log weights so they sum to one. Returns false, after resetting
    /// to uniform, when every weight underflowed.
    fn normalize(&mut self) -> bool {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            let uniform = -(self.len() as f64).ln();
            self.log_weights.iter_mut().for_each(|lw| *lw = uniform);
            return false;
        }
        let sum: f64 = self.log_weights.iter().map(|lw| (lw - max).exp()).sum();
        let shift = max + sum.ln();
        self.log_weights.iter_mut().for_each(|lw| *lw -= shift);
        true
    }

    fn resample(&mut self, rng: &mut dyn RngCore) {
        let weights = WeightVector::normalized(self.weights())
            .unwrap_or_else(|_| WeightVector::uniform(self.len()));
        let parents = self.resampling.resample(&weights, rng);
        self.particles = parents.iter().map(|&i| self.particles[i]).collect();
        let uniform = -(self.len() as f64).ln();
        self.log_weights.iter_mut().for_each(|lw| *lw = uniform);
    }

    /// Weighted mean and covariance of the current particle set.
    pub fn estimate(&self) -> FilterEstimate {
        let weights = self.weights();
        let total: f64 = weights.iter().sum();
        let mean = self
            .particles
            .iter()
            .zip(&weights)
            .fold(Vector2::zeros(), |acc, (p, w)| acc + p * *w)
            / total;
        let covariance =
            self.particles
                .iter()
                .zip(&weights)
                .fold(Matrix2::zeros(), |acc, (p, w)| {
                    let d = p - mean;
                    acc + d * d.transpose() * *w
                })
                / total;
        let n_eff = WeightVector::normalized(weights)
            .map(|w| effective_sample_size(&w))
            .unwrap_or(1.0);
        FilterEstimate {
            position: Position2D::from_vector(&mean),
            covariance,
            n_eff: Some(n_eff),
            resampled: Some(self.last_resampled),
            degenerate: self.last_degenerate,
        }
    }
}

fn gaussian_pair(rng: &mut dyn RngCore) -> Vector2<f64> {
    Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::LinearModel;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> LinearModel {
        LinearModel::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    fn set(points: &[(f64, f64)], weights: &[f64]) -> ParticleSet {
        ParticleSet {
            states: points.iter().map(|&(x, y)| Position2D::new(x, y)).collect(),
            weights: weights.to_vec(),
        }
    }

    fn cfg(process_var: f64) -> FilterConfig {
        FilterConfig {
            process_var,
            n_threshold: 1,
            ..FilterConfig::default()
        }
    }

    #[test]
    fn weighted_mean_examples() {
        let pf = ParticleFilter::from_particle_set(
            model(),
            &set(&[(0.0, 0.0), (2.0, 0.0)], &[0.5, 0.5]),
            &cfg(0.0),
            Proposal::Control,
        );
        assert!((pf.estimate().position.x - 1.0).abs() < 1e-15);
        assert_eq!(pf.estimate().position.y, 0.0);

        let pf = ParticleFilter::from_particle_set(
            model(),
            &set(&[(0.0, 0.0), (4.0, 4.0)], &[0.25, 0.75]),
            &cfg(0.0),
            Proposal::Control,
        );
        let est = pf.estimate();
        assert!((est.position.x - 3.0).abs() < 1e-12 && (est.position.y - 3.0).abs() < 1e-12);
        assert_eq!(pf.estimate(), est);
    }

    #[test]
    fn control_shift_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = set(&[(0.0, 0.0), (1.0, -3.0), (7.0, 2.0)], &[1.0; 3]);
        let mut pf =
            ParticleFilter::from_particle_set(model(), &start, &cfg(0.0), Proposal::Control);
        pf.predict(Some(Velocity::new(2.0, 0.0)), 1.0, &mut rng);
        for (a, b) in pf.particle_set().states.iter().zip(&start.states) {
            assert_eq!(a.x, b.x + 2.0);
            assert_eq!(a.y, b.y);
        }
    }

    #[test]
    fn single_particle_keeps_unit_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pf = ParticleFilter::from_particle_set(
            model(),
            &set(&[(3.0, 1.0)], &[1.0]),
            &cfg(1.0),
            Proposal::Control,
        );
        pf.predict(None, 1.0, &mut rng);
        let before = pf.particle_set().states[0];
        let est = pf.update(&DVector::from_vec(vec![-50.0]), &mut rng);
        assert_eq!(pf.weights(), vec![1.0]);
        assert_eq!(est.position, before);
        assert_eq!(est.n_eff, Some(1.0));
    }

    #[test]
    fn identical_likelihoods_keep_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // All particles share x, so the x-only likelihood is identical.
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (1.0, i as f64)).collect();
        let mut pf = ParticleFilter::from_particle_set(
            model(),
            &set(&pts, &[1.0; 20]),
            &cfg(0.0),
            Proposal::Control,
        );
        let est = pf.update(&DVector::from_vec(vec![0.3]), &mut rng);
        assert!((est.n_eff.unwrap() - 20.0).abs() < 1e-9);
        assert!(pf.weights().iter().all(|w| (w - 0.05).abs() < 1e-15));
    }

    #[test]
    fn underflow_resets_to_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tight = LinearModel::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 1e-300),
        )
        .unwrap();
        let mut pf = ParticleFilter::from_particle_set(
            tight,
            &set(&[(0.0, 0.0), (1.0, 0.0)], &[0.5, 0.5]),
            &cfg(0.0),
            Proposal::Control,
        );
        let est = pf.update(&DVector::from_vec(vec![1e10]), &mut rng);
        assert!(est.degenerate);
        let w = pf.weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generic_proposal_mean_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let mut pf = ParticleFilter::with_particles(
            model(),
            vec![Vector2::zeros(); n],
            &cfg(0.0),
            Proposal::VelocityPrior,
        );
        // Command is ignored by the generic proposal.
        pf.predict(Some(Velocity::new(100.0, 0.0)), 1.0, &mut rng);
        let mean_len: f64 = pf
            .particle_set()
            .states
            .iter()
            .map(|p| p.x.hypot(p.y))
            .sum::<f64>()
            / n as f64;
        assert!((mean_len - 3.0).abs() < 0.03, "{mean_len}");
    }
}
