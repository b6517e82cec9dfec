//! Scalar observables of a Gaussian state: density correlation,
//! particle-number covariance, subregion entropy, mutual information.
//!
//! All of these are pure functions of the correlation matrix; entropies are
//! reported in nats (the mutual-information relation I ~ (2 pi^2 / 3) G_AB
//! holds in that basis).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::CorrelationMatrix;
use crate::lattice::{LatticeError, PointPair, Region};
use crate::linalg;

/// Eigenvalues of correlation sub-blocks are clamped to [EPS, 1 - EPS]
/// before entering entropy logarithms; projector states carry exact 0/1.
const ENTROPY_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ObservablesError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("state corrupted: sub-block eigenvalue {0} outside [0, 1]")]
    CorruptedSpectrum(f64),
}

/// Observable selector used in configs and sample files.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservableKind {
    /// Density correlation C at a point pair.
    #[serde(rename = "C")]
    DensityCorrelation,
    /// Particle-number covariance G_AB between two regions.
    #[serde(rename = "G_AB")]
    Covariance,
    /// Von Neumann entropy of a region.
    #[serde(rename = "S_region")]
    RegionEntropy,
    /// Mutual information I(A:B).
    #[serde(rename = "I_AB")]
    MutualInformation,
}

impl ObservableKind {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::DensityCorrelation => "C",
            Self::Covariance => "G_AB",
            Self::RegionEntropy => "S_region",
            Self::MutualInformation => "I_AB",
        }
    }
}

impl std::str::FromStr for ObservableKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "C" => Ok(Self::DensityCorrelation),
            "G_AB" => Ok(Self::Covariance),
            "S_region" => Ok(Self::RegionEntropy),
            "I_AB" => Ok(Self::MutualInformation),
            other => Err(format!("unknown observable kind `{other}`")),
        }
    }
}

impl std::fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Density correlation C_{x x'} = <n_x><n_x'> - <n_x n_x'>. For x != x' this
/// equals |G_{x x'}|^2; at coincident points the diagonal term -G_{xx} enters.
pub fn density_correlation(state: &CorrelationMatrix, pair: &PointPair) -> f64 {
    let z = state.entry(pair.x, pair.x_prime);
    if pair.x == pair.x_prime {
        z.norm_sqr() - z.re
    } else {
        z.norm_sqr()
    }
}

/// Particle-number covariance G_AB = sum_{x in A, x' in B} |G_{x x'}|^2 for
/// disjoint regions; nonnegative by construction.
pub fn covariance(
    state: &CorrelationMatrix,
    a: &Region,
    b: &Region,
) -> Result<f64, ObservablesError> {
    a.is_disjoint(b)?;
    let g = state.matrix();
    let mut total = 0.0;
    for &x in a.sites() {
        for &xp in b.sites() {
            total += g[(x, xp)].norm_sqr();
        }
    }
    Ok(total)
}

/// Von Neumann entropy (nats) of region A from the spectrum of G[A, A]:
/// S_A = -sum_k [l_k ln l_k + (1 - l_k) ln(1 - l_k)].
pub fn region_entropy(
    state: &CorrelationMatrix,
    region: &Region,
) -> Result<f64, ObservablesError> {
    let block = state.sub_block(region);
    let mut entropy = 0.0;
    for lambda in linalg::eigvalsh(&block) {
        if !(-1e-8..=1.0 + 1e-8).contains(&lambda) {
            return Err(ObservablesError::CorruptedSpectrum(lambda));
        }
        let l = lambda.clamp(ENTROPY_CLAMP, 1.0 - ENTROPY_CLAMP);
        entropy -= l * l.ln() + (1.0 - l) * (1.0 - l).ln();
    }
    Ok(entropy)
}

/// Mutual information I(A:B) = S_A + S_B - S_{A u B} for disjoint regions.
pub fn mutual_information(
    state: &CorrelationMatrix,
    a: &Region,
    b: &Region,
) -> Result<f64, ObservablesError> {
    a.is_disjoint(b)?;
    let s_a = region_entropy(state, a)?;
    let s_b = region_entropy(state, b)?;
    let s_ab = region_entropy(state, &a.union(b))?;
    Ok(s_a + s_b - s_ab)
}
