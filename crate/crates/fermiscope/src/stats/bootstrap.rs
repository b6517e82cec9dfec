//! m-out-of-n bootstrap (random subsampling without replacement) for error
//! bars of nonlinear statistics.

use rand::Rng;

use super::StatsError;

/// Estimate `statistic` on the full sample and its standard error from
/// `n_samples` subsamples of size m = round(n^exponent), drawn without
/// replacement. The subsample-distribution spread is rescaled by
/// sqrt(m / n) to refer to the full-sample statistic (standard subsampling
/// convention; the asymptotic error of a root-n statistic scales as
/// 1/sqrt(sample size)).
pub fn subsample_bootstrap(
    samples: &[f64],
    statistic: impl Fn(&[f64]) -> f64,
    exponent: f64,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<(f64, f64), StatsError> {
    let n = samples.len();
    if n < 10 {
        return Err(StatsError::TooFewSamples { needed: 10, got: n });
    }
    let m = (n as f64).powf(exponent).round() as usize;
    if m < 2 {
        return Err(StatsError::SubsampleTooSmall(m));
    }
    let m = m.min(n);
    let estimate = statistic(samples);

    let mut indices: Vec<usize> = (0..n).collect();
    let mut subsample = vec![0.0f64; m];
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for _ in 0..n_samples {
        // Partial Fisher-Yates: the first m entries become a uniform
        // without-replacement draw.
        for i in 0..m {
            let j = rng.random_range(i..n);
            indices.swap(i, j);
            subsample[i] = samples[indices[i]];
        }
        let value = statistic(&subsample);
        sum += value;
        sum_sq += value * value;
    }
    let mean = sum / n_samples as f64;
    let var = (sum_sq / n_samples as f64 - mean * mean).max(0.0);
    let error = var.sqrt() * (m as f64 / n as f64).sqrt();
    Ok((estimate, error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    fn normal_samples(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-16);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect()
    }

    #[test]
    fn error_of_mean_matches_standard_error() {
        let n = 10_000;
        let samples = normal_samples(n, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (_, err) =
            subsample_bootstrap(&samples, mean, 0.7, 4096, &mut rng).unwrap();
        let expected = 1.0 / (n as f64).sqrt();
        assert!(
            (err - expected).abs() / expected < 0.2,
            "err = {err}, expected about {expected}"
        );
    }

    #[test]
    fn constant_samples_have_zero_error() {
        let samples = vec![3.25; 500];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (est, err) =
            subsample_bootstrap(&samples, mean, 0.7, 256, &mut rng).unwrap();
        assert_eq!(est, 3.25);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn heavy_tailed_log_statistic_is_finite_and_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let samples: Vec<f64> = (0..5000)
            .map(|_| {
                let u: f64 = rng.random::<f64>().max(1e-16);
                // Pareto-ish tail
                u.powf(-1.5)
            })
            .collect();
        let stat = |xs: &[f64]| {
            (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).ln()
        };
        let mut rng1 = ChaCha8Rng::seed_from_u64(11);
        let mut rng2 = ChaCha8Rng::seed_from_u64(11);
        let (e1, s1) = subsample_bootstrap(&samples, stat, 0.7, 512, &mut rng1).unwrap();
        let (e2, s2) = subsample_bootstrap(&samples, stat, 0.7, 512, &mut rng2).unwrap();
        assert!(e1.is_finite() && s1.is_finite() && s1 > 0.0);
        assert_eq!((e1, s1), (e2, s2));
    }

    #[test]
    fn error_scales_as_inverse_sqrt_n() {
        // Slope of ln(err) vs ln(n) near -1/2 on iid data.
        let mut pts = Vec::new();
        for (i, &n) in [400usize, 1600, 6400, 25_600].iter().enumerate() {
            let samples = normal_samples(n, 20 + i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(30 + i as u64);
            let (_, err) =
                subsample_bootstrap(&samples, mean, 0.7, 2048, &mut rng).unwrap();
            pts.push(((n as f64).ln(), err.ln()));
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (slope + 0.5).abs() < 0.1,
            "bootstrap error slope = {slope}, expected -0.5 +- 0.1"
        );
    }

    #[test]
    fn rejects_tiny_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(subsample_bootstrap(&[1.0; 5], mean, 0.7, 16, &mut rng).is_err());
    }
}
