//! Named campaign presets: the (gamma, L) grid points used by the
//! verification suite and exposed through the CLI. Each point is one
//! [`ExperimentConfig`] whose fingerprint keys its persisted sample cache.

use std::path::PathBuf;

use crate::dynamics::StepMode;
use crate::ensemble::{ExperimentConfig, Geometry, ObservableSelection};
use crate::observables::ObservableKind;

fn select(kind: ObservableKind, geometry: Geometry) -> ObservableSelection {
    ObservableSelection { kind, geometry }
}

fn base(
    lattice: usize,
    gamma: f64,
    trajectories: u64,
    base_seed: u64,
    observables: Vec<ObservableSelection>,
) -> ExperimentConfig {
    ExperimentConfig {
        lattice,
        gamma,
        trajectories,
        base_seed,
        mode: StepMode::Batched { dt: 0.1 },
        horizon: None,
        observables,
        placements: 8,
    }
}

/// One named grid point of a campaign.
#[derive(Clone, Debug)]
pub struct CampaignPoint {
    pub name: String,
    pub config: ExperimentConfig,
}

fn point(name: impl Into<String>, config: ExperimentConfig) -> CampaignPoint {
    CampaignPoint { name: name.into(), config }
}

/// Weak-monitoring ensemble for the normalized density-correlation
/// distribution (gamma = 0.5, L = 16).
pub fn porter_thomas_point() -> CampaignPoint {
    point(
        "pt_g0.5_L16",
        base(
            16,
            0.5,
            300,
            4001,
            vec![select(ObservableKind::DensityCorrelation, Geometry::DiagL2)],
        ),
    )
}

/// Diffusive-phase covariance ensembles (gamma = 1.5, L in {12, 16, 20}).
pub fn diffusive_points() -> Vec<CampaignPoint> {
    [12usize, 16, 20]
        .into_iter()
        .map(|l| {
            point(
                format!("diffusive_g1.5_L{l}"),
                base(
                    l,
                    1.5,
                    500,
                    5000 + l as u64,
                    vec![select(ObservableKind::Covariance, Geometry::StripL4)],
                ),
            )
        })
        .collect()
}

/// Localized-phase strip ensembles (gamma = 4.5, L = 4 l for separations
/// l in {3, 4, 5, 6}).
pub fn localized_strip_points() -> Vec<CampaignPoint> {
    [12usize, 16, 20, 24]
        .into_iter()
        .map(|l| {
            point(
                format!("localized_g4.5_L{l}"),
                base(
                    l,
                    4.5,
                    300,
                    6000 + l as u64,
                    vec![select(ObservableKind::Covariance, Geometry::StripL4)],
                ),
            )
        })
        .collect()
}

/// Localized-phase two-point ensembles on 2l x 2l lattices with separation
/// (l, 0), matched to the strip separations of
/// [`localized_strip_points`].
pub fn localized_point_points() -> Vec<CampaignPoint> {
    [6usize, 8, 10, 12]
        .into_iter()
        .map(|l| {
            point(
                format!("localized_C_g4.5_L{l}"),
                base(
                    l,
                    4.5,
                    300,
                    6500 + l as u64,
                    vec![select(ObservableKind::DensityCorrelation, Geometry::AxisHalfL)],
                ),
            )
        })
        .collect()
}

/// Critical-point ensembles (gamma = 2.93, L in {12, 16, 20, 24}) carrying
/// both the strip covariance and the maximally-separated density
/// correlation.
pub fn critical_points() -> Vec<CampaignPoint> {
    [12usize, 16, 20, 24]
        .into_iter()
        .map(|l| {
            point(
                format!("critical_g2.93_L{l}"),
                base(
                    l,
                    2.93,
                    500,
                    7000 + l as u64,
                    vec![
                        select(ObservableKind::Covariance, Geometry::StripL4),
                        select(ObservableKind::DensityCorrelation, Geometry::DiagL2),
                    ],
                ),
            )
        })
        .collect()
}

/// Short-horizon twin of the critical L = 12 point for the stationarity
/// comparison (T = 2L against the default 4L), matched seeds.
pub fn stationarity_half_horizon_point() -> CampaignPoint {
    let mut p = critical_points().into_iter().next().expect("L=12 point");
    p.name = "critical_g2.93_L12_T2L".into();
    p.config.horizon = Some(2.0 * p.config.lattice as f64);
    p
}

/// Mutual-information ensemble (gamma = 1.5, L = 16): I_AB and G_AB over
/// the same strip placements. Two placements keep the entropy
/// diagonalizations cheap.
pub fn mutual_information_point() -> CampaignPoint {
    let mut config = base(
        16,
        1.5,
        100,
        8001,
        vec![
            select(ObservableKind::MutualInformation, Geometry::StripL4),
            select(ObservableKind::Covariance, Geometry::StripL4),
        ],
    );
    config.placements = 2;
    point("mutualinfo_g1.5_L16", config)
}

/// Matched pair for the stepping-mode equivalence check: identical physics
/// (gamma = 1.5, L = 6, T = 4), event-driven versus batched dt = 0.1,
/// independently seeded.
pub fn mode_equivalence_points() -> (CampaignPoint, CampaignPoint) {
    let observables = vec![select(ObservableKind::DensityCorrelation, Geometry::AxisHalfL)];
    let mut event = base(6, 1.5, 200, 3001, observables.clone());
    event.mode = StepMode::EventDriven;
    event.horizon = Some(4.0);
    let mut batched = base(6, 1.5, 200, 3002, observables);
    batched.horizon = Some(4.0);
    (point("mode_event_L6", event), point("mode_batched_L6", batched))
}

/// Every campaign point the verification suite consumes, cheapest first so
/// a cold cache becomes usable incrementally.
pub fn acceptance_points() -> Vec<CampaignPoint> {
    let (event, batched) = mode_equivalence_points();
    let mut points = vec![event, batched, mutual_information_point(), porter_thomas_point()];
    points.push(stationarity_half_horizon_point());
    points.extend(localized_point_points());
    points.extend(diffusive_points());
    points.extend(localized_strip_points());
    points.extend(critical_points());
    // Within each family the lattices ascend; interleave the two heavy
    // families so smaller sizes of both finish before any L = 24 run.
    points.sort_by_key(|p| p.config.lattice * p.config.lattice * p.config.trajectories as usize);
    points
}

/// Default on-disk cache for campaign samples: FERMISCOPE_CACHE_DIR if set,
/// else `target/acceptance-cache` in the workspace.
pub fn default_cache_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("FERMISCOPE_CACHE_DIR") {
        return PathBuf::from(dir);
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-cache")
}

/// Directory holding one campaign point's samples inside `root`.
pub fn point_dir(root: &std::path::Path, point: &CampaignPoint) -> PathBuf {
    root.join(&point.name)
}
