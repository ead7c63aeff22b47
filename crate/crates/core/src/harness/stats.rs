use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n - 1) sample variance; zero for fewer than two samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn rmse(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// Two-sided Student-t interval for the mean. Collapses to the point when
/// there is no spread estimate.
pub fn confidence_interval(xs: &[f64], level: f64) -> (f64, f64) {
    let m = mean(xs);
    let n = xs.len();
    let var = sample_variance(xs);
    if n < 2 || var == 0.0 {
        return (m, m);
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.5 + 0.5 * level);
    let half = t * (var / n as f64).sqrt();
    (m - half, m + half)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    /// Mean of `a - b`.
    pub mean_difference: f64,
    pub t: f64,
    pub degrees_of_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Paired t-test on `a[i] - b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> PairedTest {
    assert_eq!(a.len(), b.len(), "paired samples differ in length");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let d = mean(&diffs);
    let sd = sample_variance(&diffs).sqrt();
    let dof = n - 1.0;
    if diffs.len() < 2 || sd == 0.0 {
        let (t, p) = if d == 0.0 {
            (0.0, 1.0)
        } else {
            (d.signum() * f64::INFINITY, 0.0)
        };
        return PairedTest {
            mean_difference: d,
            t,
            degrees_of_freedom: dof.max(0.0),
            p_value: p,
        };
    }
    let t = d / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, dof).expect("valid degrees of freedom");
    PairedTest {
        mean_difference: d,
        t,
        degrees_of_freedom: dof,
        p_value: 2.0 * dist.cdf(-t.abs()),
    }
}
