use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::geometry::{AnchorSet, Position2D};
use crate::measurement::{tdoa_covariance, tdoa_expected, tdoa_jacobian, NoiseModel};

/// Observation model z = h(x) + v, v ~ N(0, R), over a planar position state.
pub trait MeasurementModel {
    fn dim(&self) -> usize;

    fn expected(&self, state: &Vector2<f64>) -> DVector<f64>;

    /// dh/dx, `dim() x 2`.
    fn jacobian(&self, state: &Vector2<f64>) -> DMatrix<f64>;

    fn covariance(&self) -> &DMatrix<f64>;

    fn precision(&self) -> &DMatrix<f64>;

    /// Log-likelihood up to an additive constant.
    fn log_likelihood(&self, z: &DVector<f64>, state: &Vector2<f64>) -> f64 {
        let r = z - self.expected(state);
        -0.5 * (r.transpose() * self.precision() * &r)[(0, 0)]
    }
}

fn invert_spd(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    cov.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| {
        Error::InvalidParameter("measurement covariance is not positive definite".into())
    })
}

/// Range-difference model against a fixed anchor set.
#[derive(Debug, Clone)]
pub struct TdoaModel {
    anchors: AnchorSet,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl TdoaModel {
    /// `toa_variance` is the per-anchor range noise variance (m^2).
    pub fn new(anchors: AnchorSet, toa_variance: f64, noise_model: NoiseModel) -> Result<Self> {
        anchors.require(3)?;
        if !(toa_variance > 0.0 && toa_variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "measurement variance must be > 0, got {toa_variance}"
            )));
        }
        let covariance = tdoa_covariance(anchors.len() - 1, toa_variance, noise_model);
        let precision = invert_spd(&covariance)?;
        Ok(Self {
            anchors,
            covariance,
            precision,
        })
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }
}

impl MeasurementModel for TdoaModel {
    fn dim(&self) -> usize {
        self.anchors.len() - 1
    }

    fn expected(&self, state: &Vector2<f64>) -> DVector<f64> {
        DVector::from_vec(tdoa_expected(
            &Position2D::from_vector(state),
            &self.anchors,
        ))
    }

    fn jacobian(&self, state: &Vector2<f64>) -> DMatrix<f64> {
        tdoa_jacobian(&Position2D::from_vector(state), &self.anchors)
    }

    fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    fn log_likelihood(&self, z: &DVector<f64>, state: &Vector2<f64>) -> f64 {
        // Hot path for particle weighting: avoid the intermediate allocations.
        let m = self.dim();
        let mut buf = [0.0f64; 32];
        if m > buf.len() {
            let r = z - self.expected(state);
            return -0.5 * (r.transpose() * &self.precision * &r)[(0, 0)];
        }
        let p = Position2D::from_vector(state);
        let d_ref = p.distance(&self.anchors.reference());
        for ((slot, i), zk) in buf
            .iter_mut()
            .zip(self.anchors.non_reference())
            .zip(z.iter())
        {
            *slot = zk - (p.distance(&self.anchors.get(i)) - d_ref);
        }
        let r = &buf[..m];
        let mut q = 0.0;
        for i in 0..m {
            let mut row = 0.0;
            for j in 0..m {
                row += self.precision[(i, j)] * r[j];
            }
            q += r[i] * row;
        }
        -0.5 * q
    }
}

/// Linear model z = H x + v. Used for surrogate checks against the exact
/// Kalman filter.
#[derive(Debug, Clone)]
pub struct LinearModel {
    h: DMatrix<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(h: DMatrix<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if h.ncols() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                actual: h.ncols(),
            });
        }
        if covariance.nrows() != h.nrows() || covariance.ncols() != h.nrows() {
            return Err(Error::DimensionMismatch {
                expected: h.nrows(),
                actual: covariance.nrows(),
            });
        }
        let precision = invert_spd(&covariance)?;
        Ok(Self {
            h,
            covariance,
            precision,
        })
    }
}

impl MeasurementModel for LinearModel {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn expected(&self, state: &Vector2<f64>) -> DVector<f64> {
        &self.h * DVector::from_column_slice(state.as_slice())
    }

    fn jacobian(&self, _state: &Vector2<f64>) -> DMatrix<f64> {
        self.h.clone()
    }

    fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TdoaModel {
        let anchors = AnchorSet::new(
            vec![
                Position2D::new(0.0, 0.0),
                Position2D::new(100.0, 0.0),
                Position2D::new(100.0, 100.0),
                Position2D::new(0.0, 100.0),
            ],
            0,
        )
        .unwrap();
        TdoaModel::new(anchors, 1.0, NoiseModel::Correlated).unwrap()
    }

    #[test]
    fn fast_likelihood_matches_generic_form() {
        let m = model();
        let z = DVector::from_vec(vec![3.0, -1.0, 7.5]);
        let x = Vector2::new(31.0, 62.0);
        let r = &z - m.expected(&x);
        let generic = -0.5 * (r.transpose() * m.precision() * &r)[(0, 0)];
        assert!((m.log_likelihood(&z, &x) - generic).abs() < 1e-10);
    }

    #[test]
    fn precision_inverts_covariance() {
        let m = model();
        let eye = m.covariance() * m.precision();
        assert!((eye - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_variance() {
        let anchors = model().anchors().clone();
        assert!(TdoaModel::new(anchors, 0.0, NoiseModel::Correlated).is_err());
    }
}
