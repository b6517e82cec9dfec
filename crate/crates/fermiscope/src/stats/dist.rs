//! Reference distributions and Kolmogorov-Smirnov machinery.

use super::special::{double_factorial_odd, kolmogorov_q, normal_cdf};
use super::StatsError;

/// Density of the normalized density-correlation fluctuations in the weak
/// monitoring limit: P(z) = e^{-z/2} / sqrt(2 pi z).
pub fn porter_thomas(z: f64) -> Result<f64, StatsError> {
    if z <= 0.0 {
        return Err(StatsError::NonPositiveArgument);
    }
    Ok((-z / 2.0).exp() / (2.0 * std::f64::consts::PI * z).sqrt())
}

/// CDF of [`porter_thomas`]: erf(sqrt(z / 2)).
pub fn pt_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    super::special::erf((z / 2.0).sqrt())
}

/// Moments of the Porter-Thomas law: mean(z^q) = (2q - 1)!!.
pub fn pt_moment(q: u32) -> f64 {
    double_factorial_odd(q)
}

/// One-sample Kolmogorov-Smirnov test of `samples` against a reference CDF.
/// Returns (statistic, asymptotic p-value).
pub fn ks_test_cdf(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut stat = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = (f - i as f64 / n).abs();
        let hi = ((i + 1) as f64 / n - f).abs();
        stat = stat.max(lo).max(hi);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * stat;
    (stat, kolmogorov_q(lambda))
}

/// Two-sample Kolmogorov-Smirnov test. Returns (statistic, asymptotic
/// p-value with the effective sample size n1 n2 / (n1 + n2)).
pub fn ks_test_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n1, n2) = (xs.len(), ys.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut stat = 0.0f64;
    while i < n1 && j < n2 {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        let d = (i as f64 / n1 as f64 - j as f64 / n2 as f64).abs();
        stat = stat.max(d);
    }
    let n_eff = (n1 as f64 * n2 as f64) / (n1 + n2) as f64;
    let sqrt_n = n_eff.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * stat;
    (stat, kolmogorov_q(lambda))
}

/// Moment-matched Gaussian fit with a KS comparison against it.
#[derive(Clone, Copy, Debug)]
pub struct GaussianFit {
    pub mean: f64,
    pub variance: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
}

pub fn gaussian_fit(samples: &[f64]) -> Result<GaussianFit, StatsError> {
    if samples.len() < 30 {
        return Err(StatsError::TooFewSamples { needed: 30, got: samples.len() });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if variance <= 0.0 {
        return Err(StatsError::NonPositiveVariance(variance));
    }
    let sd = variance.sqrt();
    let (ks_statistic, p_value) = ks_test_cdf(samples, |x| normal_cdf((x - mean) / sd));
    Ok(GaussianFit { mean, variance, ks_statistic, p_value })
}
