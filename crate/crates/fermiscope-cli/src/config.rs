//! Campaign config files (TOML) and named presets.

use std::path::Path;

use fermiscope::campaigns::{self, CampaignPoint};
use fermiscope::dynamics::StepMode;
use fermiscope::ensemble::{ExperimentConfig, Geometry, ObservableSelection};
use fermiscope::observables::ObservableKind;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFile {
    pub grid: GridSection,
    pub run: RunSection,
    pub observables: Vec<ObservableSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lattices: Vec<usize>,
    pub gammas: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub trajectories: u64,
    pub base_seed: u64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Horizon T = horizon_factor * L unless `horizon` is given.
    pub horizon_factor: Option<f64>,
    pub horizon: Option<f64>,
    #[serde(default = "default_placements")]
    pub placements: u32,
}

fn default_mode() -> String {
    "batched".into()
}

fn default_dt() -> f64 {
    0.1
}

fn default_placements() -> u32 {
    8
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSection {
    pub kind: String,
    pub geometry: String,
}

impl CampaignFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&raw).map_err(|e| format!("cannot parse {}: {e}", path.display()))
    }

    /// Expand the (gamma, L) grid into named campaign points.
    pub fn points(&self) -> Result<Vec<CampaignPoint>, String> {
        let mode = match self.run.mode.as_str() {
            "batched" => StepMode::Batched { dt: self.run.dt },
            "event-driven" => StepMode::EventDriven,
            other => return Err(format!("unknown mode `{other}`")),
        };
        let mut observables = Vec::new();
        for obs in &self.observables {
            let kind: ObservableKind = obs.kind.parse()?;
            let geometry: Geometry = obs.geometry.parse()?;
            observables.push(ObservableSelection { kind, geometry });
        }
        if observables.is_empty() {
            return Err("no observables selected".into());
        }
        let mut points = Vec::new();
        for &gamma in &self.grid.gammas {
            for &lattice in &self.grid.lattices {
                let horizon = match (self.run.horizon, self.run.horizon_factor) {
                    (Some(h), _) => Some(h),
                    (None, Some(f)) => Some(f * lattice as f64),
                    (None, None) => None,
                };
                let config = ExperimentConfig {
                    lattice,
                    gamma,
                    trajectories: self.run.trajectories,
                    base_seed: self.run.base_seed,
                    mode,
                    horizon,
                    observables: observables.clone(),
                    placements: self.run.placements,
                };
                config.validate().map_err(|e| e.to_string())?;
                points.push(CampaignPoint {
                    name: format!("g{gamma}_L{lattice}"),
                    config,
                });
            }
        }
        Ok(points)
    }
}

/// Resolve a preset name into campaign points.
pub fn preset_points(name: &str) -> Result<Vec<CampaignPoint>, String> {
    let desk = |gamma: f64, lattices: &[usize], trajectories: u64, seed: u64, obs: Vec<ObservableSelection>| {
        lattices
            .iter()
            .map(|&l| CampaignPoint {
                name: format!("g{gamma}_L{l}"),
                config: ExperimentConfig {
                    lattice: l,
                    gamma,
                    trajectories,
                    base_seed: seed,
                    mode: StepMode::Batched { dt: 0.1 },
                    horizon: None,
                    observables: obs.clone(),
                    placements: 8,
                },
            })
            .collect::<Vec<_>>()
    };
    let gab = vec![ObservableSelection {
        kind: ObservableKind::Covariance,
        geometry: Geometry::StripL4,
    }];
    let c_diag = vec![ObservableSelection {
        kind: ObservableKind::DensityCorrelation,
        geometry: Geometry::DiagL2,
    }];
    let both = vec![gab[0], c_diag[0]];
    Ok(match name {
        "diffusive-desk" => desk(1.5, &[12, 16, 20], 300, 1501, gab),
        "critical-desk" => desk(2.93, &[12, 16, 20, 24], 300, 2931, both),
        "localized-desk" => desk(4.5, &[12, 16, 20, 24], 300, 4501, gab),
        "porter-thomas-desk" => desk(0.5, &[16], 300, 501, c_diag),
        "diffusive-campaign" => campaigns::diffusive_points(),
        "critical-campaign" => campaigns::critical_points(),
        "localized-campaign" => {
            let mut points = campaigns::localized_strip_points();
            points.extend(campaigns::localized_point_points());
            points
        }
        "porter-thomas-campaign" => vec![campaigns::porter_thomas_point()],
        "mutual-info" => vec![campaigns::mutual_information_point()],
        "mode-equivalence" => {
            let (a, b) = campaigns::mode_equivalence_points();
            vec![a, b]
        }
        "acceptance" => campaigns::acceptance_points(),
        other => {
            return Err(format!(
                "unknown preset `{other}` (try diffusive-desk, critical-desk, \
                 localized-desk, porter-thomas-desk, diffusive-campaign, \
                 critical-campaign, localized-campaign, porter-thomas-campaign, \
                 mutual-info, mode-equivalence, acceptance)"
            ))
        }
    })
}
