//! Report pipelines over persisted sample sets: distribution tables, moment
//! and variance summaries, scaling fits, and multifractal spectra. The CLI
//! `analyze` command and the verification suite both run through these.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{Geometry, SampleSet};
use crate::observables::ObservableKind;
use crate::stats::{
    fit_alpha_q, fit_delta_q, fit_localization, fit_parabolic_delta, fit_variance_exponent,
    gaussian_fit, ks_test_cdf, ks_test_two_sample, legendre_spectrum, pt_cdf,
    subsample_bootstrap, weighted_linear_fit, EmpiricalDistribution, ExponentPoint,
    FitResult, GaussianFit, LocalizationFit, ScalingSamples, SpectrumPoint, StatsError,
    VarianceExponentFit,
};

/// Bootstrap defaults mirroring the error-estimation protocol: subsample
/// size m = n^0.7, 4096 subsamples.
pub const BOOTSTRAP_EXPONENT: f64 = 0.7;
pub const BOOTSTRAP_SAMPLES: usize = 4096;

/// Default moment orders for the multifractal fits.
pub fn default_q_grid() -> Vec<f64> {
    (1..=10).map(|i| 0.25 * i as f64).collect()
}

/// Mutual information to covariance proportionality constant, 2 pi^2 / 3.
pub const MI_COVARIANCE_RATIO: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::PI / 3.0;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("missing observable: no {kind} samples over {geometry} in the input sets")]
    MissingObservable { kind: ObservableKind, geometry: Geometry },
    #[error("need sample sets at >= {needed} sizes, got {got}")]
    TooFewSizes { needed: usize, got: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn pooled(
    set: &SampleSet,
    kind: ObservableKind,
    geometry: Geometry,
) -> Result<Vec<f64>, AnalysisError> {
    let values = set.values(kind, geometry);
    if values.is_empty() {
        return Err(AnalysisError::MissingObservable { kind, geometry });
    }
    Ok(values)
}

/// Per-size summary of the covariance distribution in the diffusive phase.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovarianceSizeStats {
    pub lattice: usize,
    pub samples: usize,
    pub mean: f64,
    pub mean_err: f64,
    pub variance: f64,
    pub variance_err: f64,
    pub gaussian_ks: f64,
    pub gaussian_p: f64,
    pub histogram: EmpiricalDistribution,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiffusiveReport {
    pub per_size: Vec<CovarianceSizeStats>,
    /// Weighted fit of mean G_AB against L.
    pub mean_fit: FitResult,
}

/// Covariance fluctuation summary across system sizes (diffusive phase).
pub fn analyze_diffusive(
    sets: &[(usize, SampleSet)],
    seed: u64,
) -> Result<DiffusiveReport, AnalysisError> {
    if sets.len() < 3 {
        return Err(AnalysisError::TooFewSizes { needed: 3, got: sets.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_size = Vec::with_capacity(sets.len());
    for (l, set) in sets {
        let values = pooled(set, ObservableKind::Covariance, Geometry::StripL4)?;
        let mean_stat = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var_stat = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let (mean, mean_err) = subsample_bootstrap(
            &values,
            mean_stat,
            BOOTSTRAP_EXPONENT,
            BOOTSTRAP_SAMPLES,
            &mut rng,
        )?;
        let (variance, variance_err) = subsample_bootstrap(
            &values,
            var_stat,
            BOOTSTRAP_EXPONENT,
            BOOTSTRAP_SAMPLES,
            &mut rng,
        )?;
        // KS needs independent samples: restrict to one placement per
        // trajectory (pooled placements are correlated within a trajectory).
        let independent = set.placement_values(ObservableKind::Covariance, Geometry::StripL4, 0);
        let ks_input = if independent.len() >= 30 { &independent } else { &values };
        let GaussianFit { ks_statistic, p_value, .. } = gaussian_fit(ks_input)?;
        per_size.push(CovarianceSizeStats {
            lattice: *l,
            samples: values.len(),
            mean,
            mean_err,
            variance,
            variance_err,
            gaussian_ks: ks_statistic,
            gaussian_p: p_value,
            histogram: EmpiricalDistribution::from_samples(values)?,
        });
    }
    let xs: Vec<f64> = per_size.iter().map(|s| s.lattice as f64).collect();
    let ys: Vec<f64> = per_size.iter().map(|s| s.mean).collect();
    let es: Vec<f64> = per_size.iter().map(|s| s.mean_err.max(1e-9)).collect();
    let mean_fit = weighted_linear_fit(&xs, &ys, &es)?;
    Ok(DiffusiveReport { per_size, mean_fit })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PorterThomasSizeStats {
    pub lattice: usize,
    pub samples: usize,
    /// mean(z^2) for z = C / mean(C), with bootstrap error.
    pub z_second_moment: f64,
    pub z_second_moment_err: f64,
    /// KS distance and p-value of P(z) against the analytic density.
    pub ks_distance: f64,
    pub ks_p: f64,
    pub histogram: EmpiricalDistribution,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PorterThomasReport {
    pub per_size: Vec<PorterThomasSizeStats>,
}

/// Normalized density-correlation fluctuations against the analytic
/// weak-monitoring law.
pub fn analyze_porter_thomas(
    sets: &[(usize, SampleSet)],
    seed: u64,
) -> Result<PorterThomasReport, AnalysisError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_size = Vec::with_capacity(sets.len());
    for (l, set) in sets {
        let values = pooled(set, ObservableKind::DensityCorrelation, Geometry::DiagL2)?;
        // Self-normalizing second moment: mean(x^2)/mean(x)^2.
        let z2_stat = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let m2 = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
            m2 / (m * m)
        };
        let (z2, z2_err) = subsample_bootstrap(
            &values,
            z2_stat,
            BOOTSTRAP_EXPONENT,
            BOOTSTRAP_SAMPLES,
            &mut rng,
        )?;
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let z: Vec<f64> = values.iter().map(|c| c / mean).collect();
        let (ks_distance, ks_p) = ks_test_cdf(&z, pt_cdf);
        per_size.push(PorterThomasSizeStats {
            lattice: *l,
            samples: z.len(),
            z_second_moment: z2,
            z_second_moment_err: z2_err,
            ks_distance,
            ks_p,
            histogram: EmpiricalDistribution::from_samples(z)?,
        });
    }
    Ok(PorterThomasReport { per_size })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairKs {
    pub lattice_a: usize,
    pub lattice_b: usize,
    pub ks_statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalReport {
    /// Anomalous dimensions Delta_q over the q grid.
    pub delta: Vec<ExponentPoint>,
    /// Direct alpha_q over the same grid.
    pub alpha: Vec<ExponentPoint>,
    /// Legendre spectrum pairing the two.
    pub spectrum: Vec<SpectrumPoint>,
    /// One-parameter parabolic approximation Delta_q = q + c q(1-q).
    pub parabolic_c: f64,
    pub parabolic_c_err: f64,
    /// alpha at q = 0: position of the f(alpha) maximum.
    pub alpha0: ExponentPoint,
    /// Delta at q = 1 (exact prediction d - 1 = 1).
    pub delta1: ExponentPoint,
    /// Pairwise scale-invariance comparison of P(ln G_AB) across sizes.
    pub ln_covariance_ks: Vec<PairKs>,
    pub ln_covariance_histograms: Vec<(usize, EmpiricalDistribution)>,
    pub discarded_zero_samples: usize,
}

/// Multifractal analysis of the density correlation plus scale invariance
/// of the covariance distribution at the critical point.
pub fn analyze_critical(
    sets: &[(usize, SampleSet)],
    qs: &[f64],
    seed: u64,
) -> Result<CriticalReport, AnalysisError> {
    if sets.len() < 3 {
        return Err(AnalysisError::TooFewSizes { needed: 3, got: sets.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scaling = Vec::with_capacity(sets.len());
    for (l, set) in sets {
        let values = pooled(set, ObservableKind::DensityCorrelation, Geometry::DiagL2)?;
        scaling.push(ScalingSamples::new(*l as f64, values));
    }
    let (delta, discarded) =
        fit_delta_q(&scaling, qs, 2, BOOTSTRAP_EXPONENT, BOOTSTRAP_SAMPLES, &mut rng)?;
    let (alpha, _) =
        fit_alpha_q(&scaling, qs, BOOTSTRAP_EXPONENT, BOOTSTRAP_SAMPLES, &mut rng)?;
    let spectrum = legendre_spectrum(&delta, &alpha, 2)?;
    let (parabolic_c, parabolic_c_err) = fit_parabolic_delta(&delta)?;
    let (alpha0_vec, _) =
        fit_alpha_q(&scaling, &[0.0], BOOTSTRAP_EXPONENT, BOOTSTRAP_SAMPLES, &mut rng)?;
    let alpha0 = alpha0_vec[0];
    let delta1 = *delta
        .iter()
        .find(|p| (p.q - 1.0).abs() < 1e-9)
        .unwrap_or(&ExponentPoint { q: 1.0, value: f64::NAN, error: f64::NAN, chi2_per_dof: 0.0 });

    let mut ln_sets = Vec::with_capacity(sets.len());
    let mut ln_independent = Vec::with_capacity(sets.len());
    for (l, set) in sets {
        let values = pooled(set, ObservableKind::Covariance, Geometry::StripL4)?;
        let ln: Vec<f64> = values.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).collect();
        ln_sets.push((*l, ln));
        // One placement per trajectory keeps the KS samples independent.
        let single = set.placement_values(ObservableKind::Covariance, Geometry::StripL4, 0);
        ln_independent
            .push((*l, single.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).collect::<Vec<f64>>()));
    }
    let mut ln_covariance_ks = Vec::new();
    for i in 0..ln_independent.len() {
        for j in (i + 1)..ln_independent.len() {
            let (ks_statistic, p_value) =
                ks_test_two_sample(&ln_independent[i].1, &ln_independent[j].1);
            ln_covariance_ks.push(PairKs {
                lattice_a: ln_independent[i].0,
                lattice_b: ln_independent[j].0,
                ks_statistic,
                p_value,
            });
        }
    }
    let ln_covariance_histograms = ln_sets
        .into_iter()
        .map(|(l, ln)| Ok((l, EmpiricalDistribution::from_samples(ln)?)))
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(CriticalReport {
        delta,
        alpha,
        spectrum,
        parabolic_c,
        parabolic_c_err,
        alpha0,
        delta1,
        ln_covariance_ks,
        ln_covariance_histograms,
        discarded_zero_samples: discarded,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizedBranch {
    /// Separation, mean ln O with error, var ln O with error, histogram.
    pub per_separation: Vec<LocalizedSeparationStats>,
    pub localization: LocalizationFit,
    pub variance_exponent: VarianceExponentFit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizedSeparationStats {
    pub separation: f64,
    pub lattice: usize,
    pub samples: usize,
    pub mean_ln: f64,
    pub mean_ln_err: f64,
    pub var_ln: f64,
    pub var_ln_err: f64,
    pub histogram: EmpiricalDistribution,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizedReport {
    /// ln G_AB over strip pairs at separation l = L/4.
    pub covariance: LocalizedBranch,
    /// ln C over point pairs at separation l = L/2 on the companion
    /// lattices, when present.
    pub correlation: Option<LocalizedBranch>,
}

fn localized_branch(
    ln_sets: Vec<(usize, f64, Vec<f64>)>,
    rng: &mut ChaCha8Rng,
) -> Result<LocalizedBranch, AnalysisError> {
    let mut per_separation = Vec::with_capacity(ln_sets.len());
    let mut scaling = Vec::with_capacity(ln_sets.len());
    for (lattice, separation, ln) in &ln_sets {
        let mean_stat = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var_stat = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let (mean_ln, mean_ln_err) =
            subsample_bootstrap(ln, mean_stat, BOOTSTRAP_EXPONENT, BOOTSTRAP_SAMPLES, rng)?;
        let (var_ln, var_ln_err) =
            subsample_bootstrap(ln, var_stat, BOOTSTRAP_EXPONENT, BOOTSTRAP_SAMPLES, rng)?;
        per_separation.push(LocalizedSeparationStats {
            separation: *separation,
            lattice: *lattice,
            samples: ln.len(),
            mean_ln,
            mean_ln_err,
            var_ln,
            var_ln_err,
            histogram: EmpiricalDistribution::from_samples(ln.clone())?,
        });
        scaling.push(ScalingSamples::new(*separation, ln.clone()));
    }
    let localization =
        fit_localization(&scaling, BOOTSTRAP_EXPONENT, BOOTSTRAP_SAMPLES, rng)?;
    let variance_exponent =
        fit_variance_exponent(&scaling, BOOTSTRAP_EXPONENT, BOOTSTRAP_SAMPLES, rng)?;
    Ok(LocalizedBranch { per_separation, localization, variance_exponent })
}

/// Localization-length and log-variance scaling of the covariance (strip
/// separation l = L/4) and optionally of the density correlation measured
/// on 2l x 2l companion lattices (separation l = L/2).
pub fn analyze_localized(
    strip_sets: &[(usize, SampleSet)],
    point_sets: &[(usize, SampleSet)],
    seed: u64,
) -> Result<LocalizedReport, AnalysisError> {
    if strip_sets.len() < 3 {
        return Err(AnalysisError::TooFewSizes { needed: 3, got: strip_sets.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strip_ln = Vec::with_capacity(strip_sets.len());
    for (l, set) in strip_sets {
        let values = pooled(set, ObservableKind::Covariance, Geometry::StripL4)?;
        let ln: Vec<f64> = values.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).collect();
        strip_ln.push((*l, *l as f64 / 4.0, ln));
    }
    let covariance = localized_branch(strip_ln, &mut rng)?;

    let correlation = if point_sets.len() >= 3 {
        let mut point_ln = Vec::with_capacity(point_sets.len());
        for (l, set) in point_sets {
            let values =
                pooled(set, ObservableKind::DensityCorrelation, Geometry::AxisHalfL)?;
            let ln: Vec<f64> =
                values.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).collect();
            point_ln.push((*l, *l as f64 / 2.0, ln));
        }
        Some(localized_branch(point_ln, &mut rng)?)
    } else {
        None
    };
    Ok(LocalizedReport { covariance, correlation })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MutualInformationReport {
    pub pairs: usize,
    /// Quartiles of |I - (2 pi^2/3) G| / I over paired samples.
    pub rel_dev_q1: f64,
    pub rel_dev_median: f64,
    pub rel_dev_q3: f64,
}

/// Relative deviation of the mutual information from its covariance
/// proxy (2 pi^2 / 3) G_AB over paired samples.
pub fn analyze_mutual_information(
    set: &SampleSet,
) -> Result<MutualInformationReport, AnalysisError> {
    let pairs = set.paired_values(
        ObservableKind::MutualInformation,
        ObservableKind::Covariance,
        Geometry::StripL4,
    );
    if pairs.is_empty() {
        return Err(AnalysisError::MissingObservable {
            kind: ObservableKind::MutualInformation,
            geometry: Geometry::StripL4,
        });
    }
    let mut devs: Vec<f64> = pairs
        .iter()
        .filter(|(i, _)| *i > 0.0)
        .map(|(i, g)| (i - MI_COVARIANCE_RATIO * g).abs() / i)
        .collect();
    devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| -> f64 {
        let pos = q * (devs.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        devs[lo] + (devs[hi] - devs[lo]) * (pos - lo as f64)
    };
    Ok(MutualInformationReport {
        pairs: devs.len(),
        rel_dev_q1: quantile(0.25),
        rel_dev_median: quantile(0.5),
        rel_dev_q3: quantile(0.75),
    })
}
