//! Range-domain measurement generators: TOA, TDOA, RSS and DOA.
//!
//! All ranges are in meters. Times of arrival are converted to ranges by
//! multiplying with [`PROPAGATION_SPEED`] before they reach any estimator.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnchorSet, Position2D};

/// Radio propagation speed, m/s.
pub const PROPAGATION_SPEED: f64 = 299_792_458.0;

/// Default tolerance (seconds) when checking redundant pairwise TDOAs.
pub const PAIRWISE_TOLERANCE: f64 = 1e-9;

pub fn true_distance(source: &Position2D, anchor: &Position2D) -> f64 {
    source.distance(anchor)
}

/// Time of flight for a range, seconds.
pub fn time_of_arrival(range: f64) -> f64 {
    range / PROPAGATION_SPEED
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "noise standard deviation must be >= 0, got {sigma}"
        )))
    }
}

fn gaussian(rng: &mut dyn RngCore, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToaMeasurement {
    pub ranges: Vec<f64>,
    pub noise_sigma: f64,
}

pub fn generate_toa(
    source: &Position2D,
    anchors: &AnchorSet,
    noise_sigma: f64,
    rng: &mut dyn RngCore,
) -> Result<ToaMeasurement> {
    check_sigma(noise_sigma)?;
    source.check_finite()?;
    let ranges = anchors
        .positions()
        .iter()
        .map(|a| true_distance(source, a) + gaussian(rng, noise_sigma))
        .collect();
    Ok(ToaMeasurement {
        ranges,
        noise_sigma,
    })
}

/// How the TDOA noise covariance is modelled by an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Entries share the reference-anchor noise: 2σ² on the diagonal, σ² elsewhere.
    #[default]
    Correlated,
    /// Ablation: entries treated as independent with variance 2σ².
    Independent,
}

/// Covariance of `dim` TDOA range differences built from per-anchor range
/// noise of variance `toa_variance`.
pub fn tdoa_covariance(dim: usize, toa_variance: f64, model: NoiseModel) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            2.0 * toa_variance
        } else {
            match model {
                NoiseModel::Correlated => toa_variance,
                NoiseModel::Independent => 0.0,
            }
        }
    })
}

/// Non-redundant range differences against the reference anchor.
///
/// Entry order follows the non-reference anchors in index order, so with the
/// default reference 0 entry `i` belongs to anchor `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaMeasurement {
    pub range_diffs: Vec<f64>,
    pub reference_index: usize,
    pub noise_sigma: f64,
}

impl TdoaMeasurement {
    pub fn len(&self) -> usize {
        self.range_diffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range_diffs.is_empty()
    }

    pub fn covariance(&self, model: NoiseModel) -> DMatrix<f64> {
        tdoa_covariance(self.len(), self.noise_sigma * self.noise_sigma, model)
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.range_diffs)
    }
}

/// Noiseless range differences d_i - d_ref for every non-reference anchor.
pub fn tdoa_expected(position: &Position2D, anchors: &AnchorSet) -> Vec<f64> {
    let d_ref = true_distance(position, &anchors.reference());
    anchors
        .non_reference()
        .map(|i| true_distance(position, &anchors.get(i)) - d_ref)
        .collect()
}

/// Analytic Jacobian of [`tdoa_expected`], one row per non-reference anchor:
/// (p - a_i)/d_i - (p - a_ref)/d_ref.
pub fn tdoa_jacobian(position: &Position2D, anchors: &AnchorSet) -> DMatrix<f64> {
    let unit = |a: &Position2D| {
        let d = true_distance(position, a);
        if d > 0.0 {
            ((position.x - a.x) / d, (position.y - a.y) / d)
        } else {
            (0.0, 0.0)
        }
    };
    let (rx, ry) = unit(&anchors.reference());
    let rows: Vec<(f64, f64)> = anchors
        .non_reference()
        .map(|i| {
            let (ux, uy) = unit(&anchors.get(i));
            (ux - rx, uy - ry)
        })
        .collect();
    DMatrix::from_fn(
        rows.len(),
        2,
        |r, c| if c == 0 { rows[r].0 } else { rows[r].1 },
    )
}

/// Range differences with per-anchor Gaussian range noise.
///
/// Every anchor draws its own noise, and the reference noise is subtracted
/// from each entry, so entries are correlated through the reference.
pub fn generate_tdoa(
    source: &Position2D,
    anchors: &AnchorSet,
    noise_sigma: f64,
    rng: &mut dyn RngCore,
) -> Result<TdoaMeasurement> {
    anchors.require(3)?;
    let toa = generate_toa(source, anchors, noise_sigma, rng)?;
    let r = anchors.reference_index();
    let range_diffs = anchors
        .non_reference()
        .map(|i| toa.ranges[i] - toa.ranges[r])
        .collect();
    Ok(TdoaMeasurement {
        range_diffs,
        reference_index: r,
        noise_sigma,
    })
}

/// Position of pair (k, l), k > l, in a pairwise TDOA list ordered
/// (1,0), (2,0), (2,1), (3,0), ...
pub fn pair_index(k: usize, l: usize) -> usize {
    debug_assert!(k > l);
    k * (k - 1) / 2 + l
}

/// Number of anchors implied by a pairwise list of length L(L-1)/2.
fn anchors_for_pairs(pairs: usize) -> Option<usize> {
    let mut l = 1usize;
    while l * (l - 1) / 2 < pairs {
        l += 1;
    }
    (l * (l - 1) / 2 == pairs && l >= 2).then_some(l)
}

/// Reduces all L(L-1)/2 pairwise differences t[k,l] = t_k - t_l to the L-1
/// non-redundant ones against `reference_index`.
///
/// Discarded pairs must agree with t[k,ref] - t[l,ref] within `tolerance`;
/// a mismatch is reported instead of averaged away.
pub fn reduce_tdoa(pairwise: &[f64], reference_index: usize, tolerance: f64) -> Result<Vec<f64>> {
    let count = anchors_for_pairs(pairwise.len()).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "{} pairwise values is not L(L-1)/2 for any L >= 2",
            pairwise.len()
        ))
    })?;
    if reference_index >= count {
        return Err(Error::ReferenceOutOfRange {
            index: reference_index,
            count,
        });
    }
    let diff = |k: usize, l: usize| -> f64 {
        match k.cmp(&l) {
            std::cmp::Ordering::Greater => pairwise[pair_index(k, l)],
            std::cmp::Ordering::Less => -pairwise[pair_index(l, k)],
            std::cmp::Ordering::Equal => 0.0,
        }
    };
    let reduced: Vec<f64> = (0..count)
        .filter(|&i| i != reference_index)
        .map(|i| diff(i, reference_index))
        .collect();

    for k in 1..count {
        for l in 0..k {
            if k == reference_index || l == reference_index {
                continue;
            }
            let implied = diff(k, reference_index) - diff(l, reference_index);
            let discrepancy = (pairwise[pair_index(k, l)] - implied).abs();
            if discrepancy > tolerance {
                return Err(Error::InconsistentTdoa { k, l, discrepancy });
            }
        }
    }
    Ok(reduced)
}

/// Inverse of [`reduce_tdoa`]: rebuilds the full pairwise list from the
/// non-redundant differences.
pub fn expand_pairwise(reduced: &[f64], reference_index: usize) -> Vec<f64> {
    let count = reduced.len() + 1;
    let to_ref = |i: usize| -> f64 {
        match i.cmp(&reference_index) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => reduced[i],
            std::cmp::Ordering::Greater => reduced[i - 1],
        }
    };
    let mut out = vec![0.0; count * (count - 1) / 2];
    for k in 1..count {
        for l in 0..k {
            out[pair_index(k, l)] = to_ref(k) - to_ref(l);
        }
    }
    out
}

/// Builds a range-domain TDOA measurement from pairwise arrival-time
/// differences in seconds.
pub fn tdoa_from_pairwise_times(
    pairwise_seconds: &[f64],
    reference_index: usize,
    noise_sigma: f64,
) -> Result<TdoaMeasurement> {
    let reduced = reduce_tdoa(pairwise_seconds, reference_index, PAIRWISE_TOLERANCE)?;
    Ok(TdoaMeasurement {
        range_diffs: reduced.iter().map(|t| t * PROPAGATION_SPEED).collect(),
        reference_index,
        noise_sigma,
    })
}

/// Noise-free received powers from the path-loss law P_r = K P_t d^-alpha.
/// `alpha = 2` is free space.
#[derive(Debug, Clone, PartialEq)]
pub struct RssMeasurement {
    pub power: Vec<f64>,
    pub transmit_power: f64,
    pub gain_factors: Vec<f64>,
    pub path_loss_exponent: f64,
}

pub fn generate_rss(
    source: &Position2D,
    anchors: &AnchorSet,
    transmit_power: f64,
    gain_factors: &[f64],
    path_loss_exponent: f64,
) -> Result<RssMeasurement> {
    if !(transmit_power > 0.0 && transmit_power.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "transmit power must be > 0, got {transmit_power}"
        )));
    }
    if gain_factors.len() != anchors.len() {
        return Err(Error::DimensionMismatch {
            expected: anchors.len(),
            actual: gain_factors.len(),
        });
    }
    if let Some(k) = gain_factors.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "gain factor must be > 0, got {k}"
        )));
    }
    if !(2.0..=5.0).contains(&path_loss_exponent) {
        return Err(Error::InvalidParameter(format!(
            "path-loss exponent must lie in [2, 5], got {path_loss_exponent}"
        )));
    }
    source.check_finite()?;
    let mut power = Vec::with_capacity(anchors.len());
    for (l, (a, k)) in anchors.positions().iter().zip(gain_factors).enumerate() {
        let d = true_distance(source, a);
        if d == 0.0 {
            return Err(Error::SourceAtAnchor(l));
        }
        power.push(k * transmit_power * d.powf(-path_loss_exponent));
    }
    Ok(RssMeasurement {
        power,
        transmit_power,
        gain_factors: gain_factors.to_vec(),
        path_loss_exponent,
    })
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoaMeasurement {
    /// Bearing from each anchor to the source, radians in (-pi, pi].
    pub bearings: Vec<f64>,
    pub noise_sigma: f64,
}

pub fn generate_doa(
    source: &Position2D,
    anchors: &AnchorSet,
    noise_sigma: f64,
    rng: &mut dyn RngCore,
) -> Result<DoaMeasurement> {
    check_sigma(noise_sigma)?;
    source.check_finite()?;
    let mut bearings = Vec::with_capacity(anchors.len());
    for (l, a) in anchors.positions().iter().enumerate() {
        if true_distance(source, a) == 0.0 {
            return Err(Error::SourceAtAnchor(l));
        }
        let phi = (source.y - a.y).atan2(source.x - a.x);
        bearings.push(wrap_angle(phi + gaussian(rng, noise_sigma)));
    }
    Ok(DoaMeasurement {
        bearings,
        noise_sigma,
    })
}
