//! Snapshot least-squares TDOA localization, used as a baseline and as a
//! diagnostic. It is not one of the compared trackers.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::geometry::{AnchorSet, Position2D};
use crate::measurement::{
    tdoa_covariance, tdoa_expected, tdoa_jacobian, NoiseModel, TdoaMeasurement,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsOptions {
    /// Weight residuals by the inverse noise covariance.
    pub weighted: bool,
    pub noise_model: NoiseModel,
    pub max_iterations: usize,
    /// Converged once a Gauss-Newton step is shorter than this, meters.
    pub step_tolerance: f64,
    /// Retry from a closed-form linear estimate when the first pass fails.
    pub restart: bool,
}

impl Default for LsOptions {
    fn default() -> Self {
        Self {
            weighted: false,
            noise_model: NoiseModel::Correlated,
            max_iterations: 100,
            step_tolerance: 1e-9,
            restart: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsSolution {
    pub position: Position2D,
    /// Steps became shorter than the tolerance, the normal equations stayed
    /// regular, and the final residual is consistent with the noise level.
    pub converged: bool,
    pub iterations: usize,
    /// Unweighted residual sum of squares at `position`.
    pub residual_ss: f64,
    /// With collinear anchors, the reflection of `position` across the
    /// anchor line, which fits the data equally well.
    pub mirror: Option<Position2D>,
}

impl LsSolution {
    pub fn mirror_ambiguity(&self) -> bool {
        self.mirror.is_some()
    }
}

pub fn ls_tdoa_solve(
    measurement: &TdoaMeasurement,
    anchors: &AnchorSet,
    initial_guess: Position2D,
) -> Result<LsSolution> {
    ls_tdoa_solve_with(measurement, anchors, initial_guess, &LsOptions::default())
}

pub fn ls_tdoa_solve_with(
    measurement: &TdoaMeasurement,
    anchors: &AnchorSet,
    initial_guess: Position2D,
    options: &LsOptions,
) -> Result<LsSolution> {
    anchors.require(3)?;
    initial_guess.check_finite()?;
    let m = anchors.len() - 1;
    if measurement.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: measurement.len(),
        });
    }
    if measurement.reference_index != anchors.reference_index() {
        return Err(Error::ReferenceOutOfRange {
            index: measurement.reference_index,
            count: anchors.len(),
        });
    }
    let z = measurement.as_vector();
    let sigma = measurement.noise_sigma;
    let weight = if options.weighted && sigma > 0.0 {
        tdoa_covariance(m, sigma * sigma, options.noise_model)
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| DMatrix::identity(m, m))
    } else {
        DMatrix::identity(m, m)
    };

    let mut best = gauss_newton(&z, anchors, initial_guess.to_vector(), &weight, options);
    best.converged &= consistent(&z, anchors, &best.position, sigma, options.noise_model);
    if !best.converged && options.restart {
        if let Some(start) = linear_estimate(&z, anchors) {
            let mut second = gauss_newton(&z, anchors, start, &weight, options);
            second.converged &=
                consistent(&z, anchors, &second.position, sigma, options.noise_model);
            second.iterations += best.iterations;
            if second.converged || second.residual_ss < best.residual_ss {
                best = second;
            }
        }
    }
    let scale = anchors
        .non_reference()
        .map(|i| anchors.baseline(i))
        .fold(0.0, f64::max);
    if anchors.is_collinear(1e-9 * scale.max(1.0)) {
        best.mirror = Some(reflect(&best.position, anchors));
    }
    Ok(best)
}

fn residual_ss(z: &DVector<f64>, anchors: &AnchorSet, x: &Position2D) -> f64 {
    let h = tdoa_expected(x, anchors);
    z.iter().zip(&h).map(|(a, b)| (a - b).powi(2)).sum()
}

fn weighted_ss(z: &DVector<f64>, anchors: &AnchorSet, x: &Vector2<f64>, w: &DMatrix<f64>) -> f64 {
    let r = z - DVector::from_vec(tdoa_expected(&Position2D::from_vector(x), anchors));
    (r.transpose() * w * &r)[(0, 0)]
}

fn gauss_newton(
    z: &DVector<f64>,
    anchors: &AnchorSet,
    start: Vector2<f64>,
    w: &DMatrix<f64>,
    options: &LsOptions,
) -> LsSolution {
    let mut x = start;
    let mut converged = false;
    let mut iterations = 0;
    let mut cost = weighted_ss(z, anchors, &x, w);
    while iterations < options.max_iterations {
        iterations += 1;
        let p = Position2D::from_vector(&x);
        let j = tdoa_jacobian(&p, anchors);
        let r = z - DVector::from_vec(tdoa_expected(&p, anchors));
        let jtw = j.transpose() * w;
        let a = &jtw * &j;
        let g = &jtw * r;
        let normal = Matrix2::new(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
        let scale = normal.trace().abs();
        // Near-singular normal equations: the geometry does not pin x down.
        if !(scale > 0.0) || normal.determinant().abs() <= 1e-12 * scale * scale {
            break;
        }
        let Some(inv) = normal.try_inverse() else {
            break;
        };
        let mut step = inv * Vector2::new(g[0], g[1]);
        if !step.iter().all(|s| s.is_finite()) {
            break;
        }
        // Step halving keeps the cost from increasing.
        let mut trial = x + step;
        let mut trial_cost = weighted_ss(z, anchors, &trial, w);
        let mut halvings = 0;
        while trial_cost > cost && halvings < 40 {
            step *= 0.5;
            trial = x + step;
            trial_cost = weighted_ss(z, anchors, &trial, w);
            halvings += 1;
        }
        if trial_cost <= cost {
            x = trial;
            cost = trial_cost;
        }
        if step.norm() < options.step_tolerance {
            converged = true;
            break;
        }
    }
    let position = Position2D::from_vector(&x);
    LsSolution {
        position,
        converged,
        iterations,
        residual_ss: residual_ss(z, anchors, &position),
        mirror: None,
    }
}

/// Residual check: a stationary point that does not explain the data is a
/// local minimum, not a solution.
fn consistent(
    z: &DVector<f64>,
    anchors: &AnchorSet,
    x: &Position2D,
    sigma: f64,
    noise_model: NoiseModel,
) -> bool {
    let m = z.len();
    if sigma > 0.0 {
        let Some(chol) = tdoa_covariance(m, sigma * sigma, noise_model).cholesky() else {
            return false;
        };
        let r = z - DVector::from_vec(tdoa_expected(x, anchors));
        let wss = (r.transpose() * chol.inverse() * &r)[(0, 0)];
        let dof = (m.saturating_sub(2)).max(1) as f64;
        let limit = ChiSquared::new(dof)
            .expect("positive dof")
            .inverse_cdf(0.999);
        wss <= limit
    } else {
        residual_ss(z, anchors, x) <= m as f64 * 1e-12
    }
}

/// Closed-form estimate from the linearized equations
/// `2 b_i . x + 2 r_i d_ref = |b_i|^2 - r_i^2` with `b_i = a_i - a_ref`
/// (coordinates relative to the reference). Needs four or more anchors.
fn linear_estimate(z: &DVector<f64>, anchors: &AnchorSet) -> Option<Vector2<f64>> {
    if anchors.len() < 4 {
        return None;
    }
    let origin = anchors.reference();
    let rows: Vec<(f64, f64, f64, f64)> = anchors
        .non_reference()
        .zip(z.iter())
        .map(|(i, &r)| {
            let a = anchors.get(i);
            let (bx, by) = (a.x - origin.x, a.y - origin.y);
            (2.0 * bx, 2.0 * by, 2.0 * r, bx * bx + by * by - r * r)
        })
        .collect();
    let a = DMatrix::from_fn(rows.len(), 3, |i, j| match j {
        0 => rows[i].0,
        1 => rows[i].1,
        _ => rows[i].2,
    });
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.3));
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    let x = Vector2::new(sol[0] + origin.x, sol[1] + origin.y);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Reflection across the line through the first anchor and the farthest one.
fn reflect(p: &Position2D, anchors: &AnchorSet) -> Position2D {
    let a = anchors.get(0);
    let b = anchors
        .positions()
        .iter()
        .copied()
        .max_by(|p, q| a.distance(p).total_cmp(&a.distance(q)))
        .unwrap_or(a);
    let d = Vector2::new(b.x - a.x, b.y - a.y);
    if d.norm() == 0.0 {
        return *p;
    }
    let d = d.normalize();
    let v = Vector2::new(p.x - a.x, p.y - a.y);
    let along = d * v.dot(&d);
    let mirrored = along * 2.0 - v;
    Position2D::new(a.x + mirrored.x, a.y + mirrored.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::generate_tdoa;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn circle() -> AnchorSet {
        let pts = (0..6)
            .map(|i| {
                let a = i as f64 * std::f64::consts::PI / 3.0;
                Position2D::new(50.0 + 50.0 * a.cos(), 50.0 + 50.0 * a.sin())
            })
            .collect();
        AnchorSet::new(pts, 0).unwrap()
    }

    fn noiseless(source: Position2D, anchors: &AnchorSet) -> TdoaMeasurement {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        generate_tdoa(&source, anchors, 0.0, &mut rng).unwrap()
    }

    #[test]
    fn recovers_noiseless_source() {
        let anchors = circle();
        let z = noiseless(Position2D::new(20.0, 30.0), &anchors);
        let sol = ls_tdoa_solve(&z, &anchors, anchors.centroid()).unwrap();
        assert!(sol.converged);
        assert!(sol.position.distance(&Position2D::new(20.0, 30.0)) < 1e-6);
        assert!(!sol.mirror_ambiguity());
    }

    #[test]
    fn symmetric_center() {
        let anchors = circle();
        let z = noiseless(Position2D::new(50.0, 50.0), &anchors);
        assert!(z.range_diffs.iter().all(|d| d.abs() < 1e-12));
        let sol = ls_tdoa_solve(&z, &anchors, Position2D::new(40.0, 45.0)).unwrap();
        let d: Vec<f64> = anchors
            .positions()
            .iter()
            .map(|a| a.distance(&sol.position))
            .collect();
        assert!(d.iter().all(|x| (x - d[0]).abs() < 1e-6));
    }

    #[test]
    fn weighted_matches_truth_on_noiseless_data() {
        let anchors = circle();
        let source = Position2D::new(70.0, 20.0);
        let mut z = noiseless(source, &anchors);
        z.noise_sigma = 1.0;
        let opts = LsOptions {
            weighted: true,
            ..LsOptions::default()
        };
        let sol = ls_tdoa_solve_with(&z, &anchors, anchors.centroid(), &opts).unwrap();
        assert!(sol.converged && sol.position.distance(&source) < 1e-6);
    }

    #[test]
    fn collinear_geometry_is_flagged() {
        let anchors = AnchorSet::new(
            (0..4)
                .map(|i| Position2D::new(10.0 * i as f64, 0.0))
                .collect(),
            0,
        )
        .unwrap();
        let source = Position2D::new(12.0, 7.0);
        let z = noiseless(source, &anchors);
        for guess in [
            Position2D::new(15.0, 0.0),
            Position2D::new(15.0, 1.0),
            Position2D::new(5.0, -3.0),
        ] {
            let sol = ls_tdoa_solve(&z, &anchors, guess).unwrap();
            assert!(!sol.converged || sol.mirror_ambiguity());
            if let Some(m) = sol.mirror {
                // The reflection reproduces the same range differences.
                let a = tdoa_expected(&m, &anchors);
                let b = tdoa_expected(&sol.position, &anchors);
                assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn inconsistent_fit_is_not_converged() {
        let anchors = circle();
        let mut z = noiseless(Position2D::new(20.0, 30.0), &anchors);
        z.range_diffs[2] += 40.0;
        let opts = LsOptions {
            restart: false,
            ..LsOptions::default()
        };
        let sol = ls_tdoa_solve_with(&z, &anchors, anchors.centroid(), &opts).unwrap();
        assert!(!sol.converged);
    }
}
