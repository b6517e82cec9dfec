//! Statistical post-processing: empirical distributions, bootstrap error
//! bars, scaling fits, multifractal exponents, and reference analytic
//! distributions.

mod bootstrap;
mod dist;
mod fits;
mod special;

pub use bootstrap::subsample_bootstrap;
pub use dist::{
    gaussian_fit, ks_test_cdf, ks_test_two_sample, porter_thomas, pt_cdf, pt_moment,
    GaussianFit,
};
pub use fits::{
    fit_alpha_q, fit_delta_q, fit_localization, fit_parabolic_delta,
    fit_variance_exponent, legendre_spectrum, weighted_linear_fit, ExponentPoint,
    FitResult, LocalizationFit, ScalingSamples, SpectrumPoint, VarianceExponentFit,
};
pub use special::{erf, normal_cdf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("subsample size m = {0} is too small")]
    SubsampleTooSmall(usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("sigma values must be positive")]
    InvalidSigma,
    #[error("degenerate abscissa: all x equal")]
    DegenerateAbscissa,
    #[error("non-positive moment mean({0}) encountered")]
    NonPositiveMoment(String),
    #[error("q grids of the two exponent sets do not match")]
    MismatchedGrids,
    #[error("density undefined for z <= 0")]
    NonPositiveArgument,
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
}

/// Histogram plus raw samples and moments of a scalar observable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
    edges: Vec<f64>,
    counts: Vec<u64>,
    mean: f64,
    variance: f64,
}

impl EmpiricalDistribution {
    /// Build with Freedman-Diaconis binning (fixed-width override available
    /// through [`from_samples_with_bins`](Self::from_samples_with_bins)).
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len();
        let iqr = quantile_sorted(&samples, 0.75) - quantile_sorted(&samples, 0.25);
        let span = samples[n - 1] - samples[0];
        let width = 2.0 * iqr / (n as f64).cbrt();
        let bins = if width > 0.0 && span > 0.0 {
            ((span / width).ceil() as usize).clamp(1, 10_000)
        } else {
            1
        };
        Self::from_sorted_with_bins(samples, bins)
    }

    pub fn from_samples_with_bins(
        mut samples: Vec<f64>,
        bins: usize,
    ) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self::from_sorted_with_bins(samples, bins.max(1))
    }

    fn from_sorted_with_bins(samples: Vec<f64>, bins: usize) -> Result<Self, StatsError> {
        let n = samples.len();
        let lo = samples[0];
        let hi = samples[n - 1];
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        let edges: Vec<f64> =
            (0..=bins).map(|i| lo + span * i as f64 / bins as f64).collect();
        let mut counts = vec![0u64; bins];
        for &s in &samples {
            let mut idx = ((s - lo) / span * bins as f64) as usize;
            if idx >= bins {
                idx = bins - 1;
            }
            counts[idx] += 1;
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Ok(Self { samples, edges, counts, mean, variance })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Raw samples, ascending.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Raw moment mean(x^q).
    pub fn moment(&self, q: f64) -> f64 {
        self.samples.iter().map(|&s| s.powf(q)).sum::<f64>() / self.len() as f64
    }

    /// Normalized bin densities (integrate to one).
    pub fn densities(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, e)| {
                let w = (e[1] - e[0]).max(f64::MIN_POSITIVE);
                c as f64 / (n * w)
            })
            .collect()
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_sum_to_n() {
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let dist = EmpiricalDistribution::from_samples(samples).unwrap();
        assert_eq!(dist.counts().iter().sum::<u64>(), 1000);
        assert_eq!(dist.counts().len() + 1, dist.edges().len());
    }

    #[test]
    fn constant_samples_degenerate_histogram() {
        let dist = EmpiricalDistribution::from_samples(vec![2.5; 40]).unwrap();
        assert_eq!(dist.counts().iter().sum::<u64>(), 40);
        assert_eq!(dist.variance(), 0.0);
        assert_eq!(dist.mean(), 2.5);
    }

    #[test]
    fn moments_of_known_set() {
        let dist = EmpiricalDistribution::from_samples(vec![1.0, 2.0, 4.0]).unwrap();
        assert!((dist.moment(1.0) - 7.0 / 3.0).abs() < 1e-14);
        assert!((dist.moment(2.0) - 21.0 / 3.0).abs() < 1e-14);
    }
}
