//! Effective sample size and resampling schemes.
//!
//! Every scheme returns `N` parent indices in `[0, N)`; after copying the
//! parents the caller resets all weights to `1/N`. Index order is not part of
//! the contract, only the multiset of copies.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum |sum(w) - 1| accepted as normalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

const FLOOR_SLACK: f64 = 1e-9;

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidParameter(format!("invalid weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::UnnormalizedWeights(sum));
        }
        Ok(Self(weights))
    }

    /// Normalizes arbitrary non-negative weights with a positive sum.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::UnnormalizedWeights(sum));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(weights)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `1 / sum(w_i^2)`, clamped to the theoretical range `[1, N]`.
pub fn effective_sample_size(weights: &WeightVector) -> f64 {
    let w = weights.as_slice();
    // Compensated sums keep the uniform case exact to ~1e-12 at large N.
    let sum = compensated_sum(w.iter().copied());
    let sq = compensated_sum(w.iter().map(|x| x * x));
    (sum * sum / sq).clamp(1.0, w.len() as f64)
}

/// Neumaier summation.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        c += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + c
}

/// Checked variant for raw slices.
pub fn effective_sample_size_of(weights: &[f64]) -> Result<f64> {
    Ok(effective_sample_size(&WeightVector::new(weights.to_vec())?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingScheme {
    #[default]
    Residual,
    Systematic,
    Multinomial,
}

impl ResamplingScheme {
    pub fn resample(&self, weights: &WeightVector, rng: &mut dyn RngCore) -> Vec<usize> {
        match self {
            Self::Residual => residual_resample(weights, rng),
            Self::Systematic => systematic_resample(weights, rng),
            Self::Multinomial => multinomial_resample(weights, rng),
        }
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    // Pin the tail so draws near 1 never fall off the end.
    if let Some(last) = cdf.last_mut() {
        *last = f64::INFINITY;
    }
    cdf
}

/// `draws` independent categorical draws proportional to `weights`
/// (which need not be normalized), appended to `out`.
fn categorical_draws(weights: &[f64], draws: usize, rng: &mut dyn RngCore, out: &mut Vec<usize>) {
    let total: f64 = weights.iter().sum();
    let cdf = cumulative(weights);
    for _ in 0..draws {
        let u: f64 = rng.random::<f64>() * total;
        // First slot whose cdf exceeds u; zero-weight slots never qualify.
        let idx = cdf.partition_point(|c| *c <= u);
        out.push(idx.min(weights.len() - 1));
    }
}

pub fn multinomial_resample(weights: &WeightVector, rng: &mut dyn RngCore) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    categorical_draws(weights.as_slice(), n, rng, &mut out);
    out
}

/// Residual resampling: particle `i` first gets `floor(N w_i)` copies, the
/// remaining `N - sum floor(N w_i)` slots are drawn multinomially from the
/// fractional parts.
pub fn residual_resample(weights: &WeightVector, rng: &mut dyn RngCore) -> Vec<usize> {
    let n = weights.len();
    let nf = n as f64;
    let mut out = Vec::with_capacity(n);
    let mut residual = Vec::with_capacity(n);
    for (i, w) in weights.as_slice().iter().enumerate() {
        let scaled = nf * w;
        // Absorb rounding such as 7 * (1/7) = 0.999...
        let copies = ((scaled + FLOOR_SLACK).floor() as usize).min(n - out.len());
        out.extend(std::iter::repeat_n(i, copies));
        residual.push((scaled - copies as f64).max(0.0));
    }
    let remaining = n - out.len();
    if remaining > 0 {
        if residual.iter().sum::<f64>() > 0.0 {
            categorical_draws(&residual, remaining, rng, &mut out);
        } else {
            // Only reachable through rounding; fall back to the weights.
            categorical_draws(weights.as_slice(), remaining, rng, &mut out);
        }
    }
    out
}

/// Systematic resampling: one uniform offset, `N` evenly spaced pointers.
pub fn systematic_resample(weights: &WeightVector, rng: &mut dyn RngCore) -> Vec<usize> {
    let n = weights.len();
    let nf = n as f64;
    let total: f64 = weights.as_slice().iter().sum();
    let cdf = cumulative(weights.as_slice());
    let offset: f64 = rng.random();
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let u = (i as f64 + offset) / nf * total;
        while cdf[j] <= u {
            j += 1;
        }
        out.push(j);
    }
    out
}

/// Copy counts per parent index.
pub fn copy_counts(indices: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for &i in indices {
        counts[i] += 1;
    }
    counts
}
