//! Weighted least-squares fits and the finite-size-scaling /
//! multifractal-exponent extraction pipeline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bootstrap::subsample_bootstrap;
use super::StatsError;

/// Bootstrap errors of constant statistics come out exactly zero; weighted
/// fits floor sigma there to stay finite.
const SIGMA_FLOOR: f64 = 1e-9;

/// Result of a two-parameter weighted linear fit y = a + b x.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_err: f64,
    pub slope_err: f64,
    pub cov_intercept_slope: f64,
    pub chi2_per_dof: f64,
    pub dof: usize,
    /// x range the fit was performed over.
    pub window: (f64, f64),
}

/// Exact normal-equation weighted least squares for y = a + b x.
pub fn weighted_linear_fit(
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
) -> Result<FitResult, StatsError> {
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewPoints { needed: 3, got: n });
    }
    if y.len() != n || sigma.len() != n {
        return Err(StatsError::TooFewPoints { needed: n, got: y.len().min(sigma.len()) });
    }
    if sigma.iter().any(|&s| s.is_nan() || s <= 0.0) {
        return Err(StatsError::InvalidSigma);
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let w = 1.0 / (sigma[i] * sigma[i]);
        s += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    let delta = s * sxx - sx * sx;
    if delta.abs() < 1e-300 || x.iter().all(|&v| v == x[0]) {
        return Err(StatsError::DegenerateAbscissa);
    }
    let intercept = (sxx * sy - sx * sxy) / delta;
    let slope = (s * sxy - sx * sy) / delta;
    let chi2: f64 = (0..n)
        .map(|i| {
            let r = (y[i] - intercept - slope * x[i]) / sigma[i];
            r * r
        })
        .sum();
    let dof = n - 2;
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult {
        intercept,
        slope,
        intercept_err: (sxx / delta).sqrt(),
        slope_err: (s / delta).sqrt(),
        cov_intercept_slope: -sx / delta,
        chi2_per_dof: if dof > 0 { chi2 / dof as f64 } else { 0.0 },
        dof,
        window: (lo, hi),
    })
}

/// Pooled samples of a positive observable at one linear size.
#[derive(Clone, Debug)]
pub struct ScalingSamples {
    pub length: f64,
    pub values: Vec<f64>,
}

impl ScalingSamples {
    pub fn new(length: f64, values: Vec<f64>) -> Self {
        Self { length, values }
    }
}

/// One fitted exponent at a given moment order q.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExponentPoint {
    pub q: f64,
    pub value: f64,
    pub error: f64,
    pub chi2_per_dof: f64,
}

fn positive_values(values: &[f64]) -> (Vec<f64>, usize) {
    let kept: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    let discarded = values.len() - kept.len();
    (kept, discarded)
}

fn check_sets(sets: &[ScalingSamples]) -> Result<(), StatsError> {
    if sets.len() < 3 {
        return Err(StatsError::TooFewPoints { needed: 3, got: sets.len() });
    }
    Ok(())
}

/// Anomalous dimensions Delta_q from the moment regression
/// ln(mean C^q) = a_q - [q (d+1) + Delta_q] ln L over system sizes, with
/// per-point errors from the m-out-of-n bootstrap resampling the pooled
/// samples. Returns the exponent table and the count of discarded exact
/// zeros.
pub fn fit_delta_q(
    sets: &[ScalingSamples],
    qs: &[f64],
    dim: usize,
    boot_exponent: f64,
    boot_samples: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<ExponentPoint>, usize), StatsError> {
    check_sets(sets)?;
    let mut discarded_total = 0usize;
    let cleaned: Vec<(f64, Vec<f64>)> = sets
        .iter()
        .map(|s| {
            let (kept, discarded) = positive_values(&s.values);
            discarded_total += discarded;
            (s.length, kept)
        })
        .collect();
    let mut points = Vec::with_capacity(qs.len());
    for &q in qs {
        let mut xs = Vec::with_capacity(cleaned.len());
        let mut ys = Vec::with_capacity(cleaned.len());
        let mut es = Vec::with_capacity(cleaned.len());
        for (length, values) in &cleaned {
            let stat = |v: &[f64]| {
                (v.iter().map(|&c| c.powf(q)).sum::<f64>() / v.len() as f64).ln()
            };
            let (est, err) =
                subsample_bootstrap(values, stat, boot_exponent, boot_samples, rng)?;
            if !est.is_finite() {
                return Err(StatsError::NonPositiveMoment(format!("C^{q} at L={length}")));
            }
            xs.push(length.ln());
            ys.push(est);
            es.push(err.max(SIGMA_FLOOR));
        }
        let fit = weighted_linear_fit(&xs, &ys, &es)?;
        points.push(ExponentPoint {
            q,
            value: -fit.slope - q * (dim as f64 + 1.0),
            error: fit.slope_err,
            chi2_per_dof: fit.chi2_per_dof,
        });
    }
    Ok((points, discarded_total))
}

/// Direct alpha_q extraction from the derivative regression
/// mean(C^q ln C)/mean(C^q) = b_q - alpha_q ln L.
pub fn fit_alpha_q(
    sets: &[ScalingSamples],
    qs: &[f64],
    boot_exponent: f64,
    boot_samples: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<ExponentPoint>, usize), StatsError> {
    check_sets(sets)?;
    let mut discarded_total = 0usize;
    let cleaned: Vec<(f64, Vec<f64>)> = sets
        .iter()
        .map(|s| {
            let (kept, discarded) = positive_values(&s.values);
            discarded_total += discarded;
            (s.length, kept)
        })
        .collect();
    let mut points = Vec::with_capacity(qs.len());
    for &q in qs {
        let mut xs = Vec::with_capacity(cleaned.len());
        let mut ys = Vec::with_capacity(cleaned.len());
        let mut es = Vec::with_capacity(cleaned.len());
        for (length, values) in &cleaned {
            let stat = |v: &[f64]| {
                let mut num = 0.0;
                let mut den = 0.0;
                for &c in v {
                    let cq = c.powf(q);
                    num += cq * c.ln();
                    den += cq;
                }
                num / den
            };
            let (est, err) =
                subsample_bootstrap(values, stat, boot_exponent, boot_samples, rng)?;
            if !est.is_finite() {
                return Err(StatsError::NonPositiveMoment(format!("C^{q} lnC at L={length}")));
            }
            xs.push(length.ln());
            ys.push(est);
            es.push(err.max(SIGMA_FLOOR));
        }
        let fit = weighted_linear_fit(&xs, &ys, &es)?;
        points.push(ExponentPoint {
            q,
            value: -fit.slope,
            error: fit.slope_err,
            chi2_per_dof: fit.chi2_per_dof,
        });
    }
    Ok((points, discarded_total))
}

/// One point of the singularity spectrum f(alpha).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub q: f64,
    pub alpha: f64,
    pub alpha_err: f64,
    pub f: f64,
    pub f_err: f64,
}

/// Legendre transform pairing fitted alpha_q with fitted Delta_q:
/// f(alpha_q) = q alpha_q - q (d+1) - Delta_q, errors in quadrature.
pub fn legendre_spectrum(
    delta: &[ExponentPoint],
    alpha: &[ExponentPoint],
    dim: usize,
) -> Result<Vec<SpectrumPoint>, StatsError> {
    if delta.len() != alpha.len()
        || delta.iter().zip(alpha).any(|(d, a)| (d.q - a.q).abs() > 1e-12)
    {
        return Err(StatsError::MismatchedGrids);
    }
    Ok(delta
        .iter()
        .zip(alpha)
        .map(|(d, a)| {
            let q = d.q;
            let f = q * a.value - q * (dim as f64 + 1.0) - d.value;
            let f_err = ((q * a.error).powi(2) + d.error.powi(2)).sqrt();
            SpectrumPoint { q, alpha: a.value, alpha_err: a.error, f, f_err }
        })
        .collect())
}

/// One-parameter weighted fit of the parabolic approximation
/// Delta_q = q + c q (1 - q).
pub fn fit_parabolic_delta(delta: &[ExponentPoint]) -> Result<(f64, f64), StatsError> {
    if delta.len() < 3 {
        return Err(StatsError::TooFewPoints { needed: 3, got: delta.len() });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for p in delta {
        let w = 1.0 / p.error.max(SIGMA_FLOOR).powi(2);
        let phi = p.q * (1.0 - p.q);
        num += w * phi * (p.value - p.q);
        den += w * phi * phi;
    }
    if den <= 0.0 {
        return Err(StatsError::DegenerateAbscissa);
    }
    Ok((num / den, (1.0 / den).sqrt()))
}

/// Typical localization length from mean(ln O) = const - l / l_loc.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LocalizationFit {
    pub length: f64,
    pub error: f64,
    /// False when the fitted slope is non-negative (no exponential decay).
    pub localized: bool,
    pub fit: FitResult,
}

/// Fit the typical localization length over separations `l`, each with a
/// pooled set of ln O samples.
pub fn fit_localization(
    sets: &[ScalingSamples],
    boot_exponent: f64,
    boot_samples: usize,
    rng: &mut impl Rng,
) -> Result<LocalizationFit, StatsError> {
    check_sets(sets)?;
    let mut xs = Vec::with_capacity(sets.len());
    let mut ys = Vec::with_capacity(sets.len());
    let mut es = Vec::with_capacity(sets.len());
    for s in sets {
        let stat = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (est, err) =
            subsample_bootstrap(&s.values, stat, boot_exponent, boot_samples, rng)?;
        xs.push(s.length);
        ys.push(est);
        es.push(err.max(SIGMA_FLOOR));
    }
    let fit = weighted_linear_fit(&xs, &ys, &es)?;
    let localized = fit.slope < 0.0;
    let length = -1.0 / fit.slope;
    let error = fit.slope_err / (fit.slope * fit.slope);
    Ok(LocalizationFit { length, error, localized, fit })
}

/// Power-law broadening exponent mu from var(ln O) ~ l^mu.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VarianceExponentFit {
    pub mu: f64,
    pub error: f64,
    pub fit: FitResult,
}

pub fn fit_variance_exponent(
    sets: &[ScalingSamples],
    boot_exponent: f64,
    boot_samples: usize,
    rng: &mut impl Rng,
) -> Result<VarianceExponentFit, StatsError> {
    check_sets(sets)?;
    let variance = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    let mut xs = Vec::with_capacity(sets.len());
    let mut ys = Vec::with_capacity(sets.len());
    let mut es = Vec::with_capacity(sets.len());
    for s in sets {
        let (var, var_err) =
            subsample_bootstrap(&s.values, variance, boot_exponent, boot_samples, rng)?;
        if var.is_nan() || var <= 0.0 {
            return Err(StatsError::NonPositiveVariance(var));
        }
        xs.push(s.length.ln());
        ys.push(var.ln());
        es.push((var_err / var).max(SIGMA_FLOOR));
    }
    let fit = weighted_linear_fit(&xs, &ys, &es)?;
    Ok(VarianceExponentFit { mu: fit.slope, error: fit.slope_err, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line_any_sigma() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let s = [0.3, 0.1, 0.2, 0.5];
        let fit = weighted_linear_fit(&x, &y, &s).unwrap();
        assert_abs_diff_eq!(fit.intercept, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.chi2_per_dof, 0.0, epsilon = 1e-18);
    }

    #[test]
    fn frozen_three_point_wls_case() {
        // Hand-computed normal equations for points (0, 1.1, 0.1),
        // (1, 1.9, 0.2), (2, 3.2, 0.1):
        //   S = 225, Sx = 225, Sy = 477.5, Sxx = 425, Sxy = 687.5,
        //   Delta = 45000, a = 193/180, b = 1.05, chi^2 = 25/18.
        let x = [0.0, 1.0, 2.0];
        let y = [1.1, 1.9, 3.2];
        let s = [0.1, 0.2, 0.1];
        let fit = weighted_linear_fit(&x, &y, &s).unwrap();
        assert_abs_diff_eq!(fit.intercept, 193.0 / 180.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.slope, 1.05, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept_err, (425.0f64 / 45000.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(fit.slope_err, (225.0f64 / 45000.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(fit.cov_intercept_slope, -0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(fit.chi2_per_dof, 25.0 / 18.0, epsilon = 1e-12);
    }

    #[test]
    fn doubling_sigma_scales_errors_not_estimates() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.1, 1.9, 3.2];
        let s1 = [0.1, 0.2, 0.1];
        let s2 = [0.2, 0.4, 0.2];
        let f1 = weighted_linear_fit(&x, &y, &s1).unwrap();
        let f2 = weighted_linear_fit(&x, &y, &s2).unwrap();
        assert_abs_diff_eq!(f1.slope, f2.slope, epsilon = 1e-14);
        assert_abs_diff_eq!(f1.intercept, f2.intercept, epsilon = 1e-14);
        assert_abs_diff_eq!(2.0 * f1.slope_err, f2.slope_err, epsilon = 1e-14);
        assert_abs_diff_eq!(2.0 * f1.intercept_err, f2.intercept_err, epsilon = 1e-14);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(weighted_linear_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], &[0.1; 3]).is_err());
        assert!(weighted_linear_fit(&[0.0, 1.0], &[0.0, 1.0], &[0.1; 2]).is_err());
        assert!(weighted_linear_fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], &[0.1, 0.0, 0.1])
            .is_err());
    }

    #[test]
    fn fit_reorder_invariance() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.05, 2.2, 2.9, 4.3];
        let s = [0.1, 0.25, 0.15, 0.3];
        let f1 = weighted_linear_fit(&x, &y, &s).unwrap();
        let xr = [3.0, 0.0, 2.0, 1.0];
        let yr = [4.3, 1.05, 2.9, 2.2];
        let sr = [0.3, 0.1, 0.15, 0.25];
        let f2 = weighted_linear_fit(&xr, &yr, &sr).unwrap();
        assert_abs_diff_eq!(f1.slope, f2.slope, epsilon = 1e-13);
        assert_abs_diff_eq!(f1.intercept, f2.intercept, epsilon = 1e-13);
        assert_abs_diff_eq!(f1.chi2_per_dof, f2.chi2_per_dof, epsilon = 1e-12);
    }

    fn power_law_sets(exponent: f64) -> Vec<ScalingSamples> {
        [8.0f64, 16.0, 32.0, 64.0]
            .iter()
            .map(|&l| ScalingSamples::new(l, vec![l.powf(exponent); 64]))
            .collect()
    }

    #[test]
    fn pure_power_law_gives_linear_delta() {
        // C_L = L^{-(d+1)-1} exactly: Delta_q = q, chi^2 ~ 0.
        let sets = power_law_sets(-4.0);
        let qs = [0.5, 1.0, 1.5, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (points, discarded) = fit_delta_q(&sets, &qs, 2, 0.7, 64, &mut rng).unwrap();
        assert_eq!(discarded, 0);
        for p in &points {
            assert_abs_diff_eq!(p.value, p.q, epsilon = 1e-9);
            assert!(p.chi2_per_dof < 1e-3);
        }
    }

    #[test]
    fn pure_power_law_gives_constant_alpha() {
        let sets = power_law_sets(-4.0);
        let qs = [0.0, 0.5, 1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (points, _) = fit_alpha_q(&sets, &qs, 0.7, 64, &mut rng).unwrap();
        for p in &points {
            assert_abs_diff_eq!(p.value, 4.0, epsilon = 1e-9);
        }
    }

    fn lognormal_sets(sigma0_sq: f64, dim: usize, seed: u64) -> Vec<ScalingSamples> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = move || -> f64 {
            let u1: f64 = rng.random::<f64>().max(1e-16);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        [8.0f64, 16.0, 32.0, 64.0]
            .iter()
            .map(|&l| {
                let mu = -(dim as f64 + 1.0) * l.ln();
                let sd = (2.0 * sigma0_sq * l.ln()).sqrt();
                let values: Vec<f64> =
                    (0..40_000).map(|_| (mu + sd * normal()).exp()).collect();
                ScalingSamples::new(l, values)
            })
            .collect()
    }

    #[test]
    fn lognormal_model_quadratic_delta() {
        // ln C ~ N(-(d+1) ln L, 2 sigma0^2 ln L) gives Delta_q =
        // -sigma0^2 q^2 in closed form.
        let sigma0_sq = 0.25;
        let sets = lognormal_sets(sigma0_sq, 2, 77);
        let qs = [0.5, 1.0, 1.5];
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let (points, _) = fit_delta_q(&sets, &qs, 2, 0.7, 1024, &mut rng).unwrap();
        for p in &points {
            let expected = -sigma0_sq * p.q * p.q;
            let tol = (4.0 * p.error).max(0.05);
            assert!(
                (p.value - expected).abs() < tol,
                "Delta_{} = {} vs {expected} (tol {tol})",
                p.q,
                p.value
            );
        }
    }

    #[test]
    fn lognormal_model_linear_alpha() {
        let sigma0_sq = 0.25;
        let sets = lognormal_sets(sigma0_sq, 2, 79);
        let qs = [0.0, 0.5, 1.0, 1.5];
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let (points, _) = fit_alpha_q(&sets, &qs, 0.7, 1024, &mut rng).unwrap();
        for p in &points {
            let expected = 3.0 - 2.0 * sigma0_sq * p.q;
            let tol = (4.0 * p.error).max(0.05);
            assert!(
                (p.value - expected).abs() < tol,
                "alpha_{} = {} vs {expected} (tol {tol})",
                p.q,
                p.value
            );
        }
    }

    #[test]
    fn legendre_parabola_closed_form() {
        // Delta_q = q + c q(1-q) with c = 2: alpha_q = 4 + c - 2 c q,
        // f(alpha) = -[alpha - (4 + c)]^2 / (4 c) = -c q^2.
        let c = 2.0;
        let qs: Vec<f64> = (0..11).map(|i| 0.25 * i as f64).collect();
        let delta: Vec<ExponentPoint> = qs
            .iter()
            .map(|&q| ExponentPoint {
                q,
                value: q + c * q * (1.0 - q),
                error: 0.01,
                chi2_per_dof: 0.0,
            })
            .collect();
        let alpha: Vec<ExponentPoint> = qs
            .iter()
            .map(|&q| ExponentPoint {
                q,
                value: 4.0 + c - 2.0 * c * q,
                error: 0.02,
                chi2_per_dof: 0.0,
            })
            .collect();
        let spectrum = legendre_spectrum(&delta, &alpha, 2).unwrap();
        for pt in &spectrum {
            let closed = -(pt.alpha - (4.0 + c)).powi(2) / (4.0 * c);
            assert_abs_diff_eq!(pt.f, closed, epsilon = 1e-10);
            assert_abs_diff_eq!(pt.f, -c * pt.q * pt.q, epsilon = 1e-10);
        }
        // q = 0 sits at the spectrum maximum alpha_0 = 4 + c, f = 0.
        assert_abs_diff_eq!(spectrum[0].alpha, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spectrum[0].f, 0.0, epsilon = 1e-12);
        // q = 1 tangent identity: f(alpha_1) = alpha_1 - (d+1) - Delta_1.
        let q1 = spectrum.iter().find(|p| (p.q - 1.0).abs() < 1e-12).unwrap();
        let d1 = delta.iter().find(|p| (p.q - 1.0).abs() < 1e-12).unwrap();
        assert_abs_diff_eq!(q1.f, q1.alpha - 3.0 - d1.value, epsilon = 1e-12);
    }

    #[test]
    fn legendre_rejects_mismatched_grids() {
        let a = vec![ExponentPoint { q: 0.5, value: 0.0, error: 0.1, chi2_per_dof: 0.0 }];
        let b = vec![ExponentPoint { q: 0.75, value: 0.0, error: 0.1, chi2_per_dof: 0.0 }];
        assert!(legendre_spectrum(&a, &b, 2).is_err());
    }

    #[test]
    fn parabolic_delta_exact_recovery() {
        let qs: Vec<f64> = (1..11).map(|i| 0.25 * i as f64).collect();
        let delta: Vec<ExponentPoint> = qs
            .iter()
            .map(|&q| ExponentPoint {
                q,
                value: q + 2.0 * q * (1.0 - q),
                error: 0.05,
                chi2_per_dof: 0.0,
            })
            .collect();
        let (c, err) = fit_parabolic_delta(&delta).unwrap();
        assert_abs_diff_eq!(c, 2.0, epsilon = 1e-10);
        assert!(err > 0.0);
    }

    #[test]
    fn localization_length_recovery() {
        let mut rng_noise = ChaCha8Rng::seed_from_u64(5);
        let sets: Vec<ScalingSamples> = [3.0f64, 4.0, 5.0, 6.0, 8.0]
            .iter()
            .map(|&l| {
                let values: Vec<f64> = (0..4000)
                    .map(|_| -l / 0.98 + 0.3 * (rng_noise.random::<f64>() - 0.5))
                    .collect();
                ScalingSamples::new(l, values)
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fit = fit_localization(&sets, 0.7, 512, &mut rng).unwrap();
        assert!(fit.localized);
        assert!(
            (fit.length - 0.98).abs() < 0.02,
            "length = {} +- {}",
            fit.length,
            fit.error
        );
    }

    #[test]
    fn localization_flags_growing_observable() {
        let sets: Vec<ScalingSamples> = [3.0f64, 4.0, 5.0]
            .iter()
            .map(|&l| {
                let values: Vec<f64> =
                    (0..64).map(|i| l / 2.0 + 1e-6 * i as f64).collect();
                ScalingSamples::new(l, values)
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fit = fit_localization(&sets, 0.7, 128, &mut rng).unwrap();
        assert!(!fit.localized);
    }

    #[test]
    fn variance_exponent_exact_power_law() {
        // Samples scaled so the unbiased variance is exactly l^{2/3}.
        let base: Vec<f64> = (0..100).map(|i| (i as f64 * 0.71).sin()).collect();
        let base_mean = base.iter().sum::<f64>() / base.len() as f64;
        let base_var = base.iter().map(|x| (x - base_mean).powi(2)).sum::<f64>()
            / (base.len() - 1) as f64;
        let sets: Vec<ScalingSamples> = [4.0f64, 8.0, 16.0, 32.0]
            .iter()
            .map(|&l| {
                let target = l.powf(2.0 / 3.0);
                let scale = (target / base_var).sqrt();
                ScalingSamples::new(l, base.iter().map(|x| x * scale).collect())
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fit = fit_variance_exponent(&sets, 0.7, 256, &mut rng).unwrap();
        assert_abs_diff_eq!(fit.mu, 2.0 / 3.0, epsilon = 1e-9);
    }
}
