use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::{covariance_sqrt, repair_covariance, FilterEstimate, GaussianBelief, MeasurementModel};

fn to_dyn(m: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(2, 2, m.as_slice())
}

fn from_dyn(m: &DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// Solves `S X = B` for symmetric positive definite `S`.
fn spd_solve(s: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    match s.clone().cholesky() {
        Some(c) => c.solve(b),
        None => s
            .clone()
            .lu()
            .solve(b)
            .unwrap_or_else(|| DMatrix::zeros(b.nrows(), b.ncols())),
    }
}

/// Time update shared by both Kalman variants: the mean moves by the known
/// displacement (if any) and the covariance grows by `q I`.
fn motion_predict(
    belief: &mut GaussianBelief,
    displacement: Option<Vector2<f64>>,
    process_var: f64,
) {
    if let Some(d) = displacement {
        belief.mean += d;
    }
    belief.covariance += Matrix2::identity() * process_var;
}

#[derive(Debug, Clone)]
pub struct ExtendedKalmanFilter<M> {
    model: M,
    belief: GaussianBelief,
    process_var: f64,
}

impl<M: MeasurementModel> ExtendedKalmanFilter<M> {
    pub fn new(model: M, prior: GaussianBelief, process_var: f64) -> Self {
        Self {
            model,
            belief: prior,
            process_var,
        }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    pub fn predict(&mut self, displacement: Option<Vector2<f64>>) {
        motion_predict(&mut self.belief, displacement, self.process_var);
    }

    /// Linearized update; the covariance uses the Joseph form so it stays
    /// symmetric positive semi-definite.
    pub fn update(&mut self, z: &DVector<f64>) -> FilterEstimate {
        let m = self.belief.mean;
        let p = to_dyn(&self.belief.covariance);
        let h = self.model.jacobian(&m);
        let r = self.model.covariance();
        let innovation = z - self.model.expected(&m);

        let s = &h * &p * h.transpose() + r;
        // K^T = S^-1 H P, using the symmetry of S and P.
        let gain = spd_solve(&s, &(&h * &p)).transpose();

        let dx = &gain * innovation;
        self.belief.mean = m + Vector2::new(dx[0], dx[1]);
        let i_kh = DMatrix::identity(2, 2) - &gain * &h;
        let joseph = &i_kh * &p * i_kh.transpose() + &gain * r * gain.transpose();
        self.belief.covariance = repair_covariance(&from_dyn(&joseph));
        FilterEstimate::gaussian(&self.belief)
    }
}

/// Scaled sigma-point parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UnscentedKalmanFilter<M> {
    model: M,
    belief: GaussianBelief,
    process_var: f64,
    params: UkfParams,
}

impl<M: MeasurementModel> UnscentedKalmanFilter<M> {
    pub fn new(model: M, prior: GaussianBelief, process_var: f64, params: UkfParams) -> Self {
        Self {
            model,
            belief: prior,
            process_var,
            params,
        }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    /// The motion model is linear in the state, where the unscented transform
    /// is exact, so the time update is done in closed form.
    pub fn predict(&mut self, displacement: Option<Vector2<f64>>) {
        motion_predict(&mut self.belief, displacement, self.process_var);
    }

    pub fn update(&mut self, z: &DVector<f64>) -> FilterEstimate {
        const N: f64 = 2.0;
        let UkfParams { alpha, beta, kappa } = self.params;
        let lambda = alpha * alpha * (N + kappa) - N;
        let spread = N + lambda;
        let w0_mean = lambda / spread;
        let w0_cov = w0_mean + (1.0 - alpha * alpha + beta);
        let wi = 1.0 / (2.0 * spread);

        let m = self.belief.mean;
        let root = covariance_sqrt(&(self.belief.covariance * spread));
        let offsets = [
            root.column(0).into_owned(),
            root.column(1).into_owned(),
            -root.column(0).into_owned(),
            -root.column(1).into_owned(),
        ];

        let z0 = self.model.expected(&m);
        // Deviations from the center point keep the large negative center
        // weight from cancelling catastrophically.
        let dz: Vec<DVector<f64>> = offsets
            .iter()
            .map(|d| self.model.expected(&(m + d)) - &z0)
            .collect();
        let mean_shift = dz
            .iter()
            .fold(DVector::zeros(z0.len()), |acc, d| acc + d * wi);
        let z_mean = &z0 + &mean_shift;

        let dim = z0.len();
        let mut s = self.model.covariance().clone();
        let mut cross = DMatrix::<f64>::zeros(2, dim);
        // Center point: its deviation from the predicted mean is -mean_shift
        // and its state deviation is zero.
        s += &mean_shift * mean_shift.transpose() * w0_cov;
        for (d, off) in dz.iter().zip(&offsets) {
            let dev = d - &mean_shift;
            s += &dev * dev.transpose() * wi;
            let off = DVector::from_column_slice(off.as_slice());
            cross += off * dev.transpose() * wi;
        }

        // K = C S^-1  <=>  K^T = S^-1 C^T
        let gain = spd_solve(&s, &cross.transpose()).transpose();
        let dx = &gain * (z - z_mean);
        self.belief.mean = m + Vector2::new(dx[0], dx[1]);
        let p = to_dyn(&self.belief.covariance) - &gain * &s * gain.transpose();
        self.belief.covariance = repair_covariance(&from_dyn(&p));
        FilterEstimate::gaussian(&self.belief)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::LinearModel;

    fn linear() -> LinearModel {
        LinearModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[0.7, 0.1, 0.1, 0.4]),
        )
        .unwrap()
    }

    fn prior() -> GaussianBelief {
        GaussianBelief {
            mean: Vector2::new(1.0, -2.0),
            covariance: Matrix2::new(4.0, 0.3, 0.3, 2.0),
        }
    }

    /// Textbook information-form posterior for a linear model.
    fn information_posterior(
        model: &LinearModel,
        prior: &GaussianBelief,
        z: &DVector<f64>,
    ) -> (Vector2<f64>, Matrix2<f64>) {
        let h = model.jacobian(&prior.mean);
        let p_inv = prior.covariance.try_inverse().unwrap();
        let info = to_dyn(&p_inv) + h.transpose() * model.precision() * &h;
        let post = info.clone().try_inverse().unwrap();
        let rhs = to_dyn(&p_inv) * DVector::from_column_slice(prior.mean.as_slice())
            + h.transpose() * model.precision() * z;
        let mean = &post * rhs;
        (Vector2::new(mean[0], mean[1]), from_dyn(&post))
    }

    #[test]
    fn ekf_and_ukf_exact_on_linear_model() {
        let z = DVector::from_vec(vec![0.4, -3.1]);
        let (mean, cov) = information_posterior(&linear(), &prior(), &z);

        let mut ekf = ExtendedKalmanFilter::new(linear(), prior(), 0.0);
        ekf.update(&z);
        assert!((ekf.belief().mean - mean).norm() < 1e-12);
        assert!((ekf.belief().covariance - cov).norm() < 1e-12);

        let mut ukf = UnscentedKalmanFilter::new(linear(), prior(), 0.0, UkfParams::default());
        ukf.update(&z);
        assert!((ukf.belief().mean - mean).norm() < 1e-6);
        assert!((ukf.belief().covariance - cov).norm() < 1e-6);
    }

    #[test]
    fn predict_without_noise_is_identity() {
        let mut ekf = ExtendedKalmanFilter::new(linear(), prior(), 0.0);
        ekf.predict(None);
        assert_eq!(*ekf.belief(), prior());
        let mut ekf = ExtendedKalmanFilter::new(linear(), prior(), 1.5);
        ekf.predict(None);
        assert_eq!(
            ekf.belief().covariance,
            prior().covariance + Matrix2::identity() * 1.5
        );
    }
}
