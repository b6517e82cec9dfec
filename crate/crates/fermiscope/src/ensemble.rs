//! Ensemble campaigns: many independent trajectories at one (gamma, L)
//! point, observable evaluation with spatial averaging at the final time,
//! and reproducible, resumable persistence.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{run_trajectory, Propagator, StepMode, TrajectoryParams, TrajectoryRng};
use crate::gaussian::CorrelationMatrix;
use crate::lattice::{point_pairs, strip_pair, Axis, LatticeSpec, PointPair, Region};
use crate::observables::{
    covariance, density_correlation, mutual_information, region_entropy, ObservableKind,
};
use crate::stats::ks_test_two_sample;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{failed} of {total} trajectories failed (over the 1% cap)")]
    TooManyFailures { failed: usize, total: u64 },
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
    #[error("samples IO: {0}")]
    Io(#[from] std::io::Error),
    #[error("samples CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error("corrupt samples file: {0}")]
    CorruptSamples(String),
}

/// Observable geometries; the tags appear verbatim in sample files.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Geometry {
    /// Two (L/4) x L strips separated by L/4.
    #[serde(rename = "strip_L4")]
    StripL4,
    /// Point pair at maximal separation (L/2, L/2).
    #[serde(rename = "diag_L2")]
    DiagL2,
    /// Point pair at axis separation (L/2, 0) / (0, L/2).
    #[serde(rename = "axis_halfL")]
    AxisHalfL,
}

impl Geometry {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::StripL4 => "strip_L4",
            Self::DiagL2 => "diag_L2",
            Self::AxisHalfL => "axis_halfL",
        }
    }
}

impl std::str::FromStr for Geometry {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strip_L4" => Ok(Self::StripL4),
            "diag_L2" => Ok(Self::DiagL2),
            "axis_halfL" => Ok(Self::AxisHalfL),
            other => Err(format!("unknown geometry `{other}`")),
        }
    }
}

impl std::fmt::Display for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// One observable over one geometry.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservableSelection {
    pub kind: ObservableKind,
    pub geometry: Geometry,
}

/// Configuration of one ensemble grid point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Linear size of the square lattice.
    pub lattice: usize,
    /// Measurement rate per site.
    pub gamma: f64,
    pub trajectories: u64,
    pub base_seed: u64,
    pub mode: StepMode,
    /// Evolution horizon; `None` applies the steady-state default T = 4 L.
    pub horizon: Option<f64>,
    pub observables: Vec<ObservableSelection>,
    /// Spatial placements evaluated per trajectory and observable.
    pub placements: u32,
}

impl ExperimentConfig {
    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(4.0 * self.lattice as f64)
    }

    pub fn spec(&self) -> Result<LatticeSpec, EnsembleError> {
        LatticeSpec::square(self.lattice).map_err(EnsembleError::from)
    }

    pub fn trajectory_params(&self) -> TrajectoryParams {
        TrajectoryParams { gamma: self.gamma, horizon: self.horizon(), mode: self.mode }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.trajectories == 0 {
            return Err(EnsembleError::InvalidConfig("trajectories must be >= 1".into()));
        }
        if self.placements == 0 {
            return Err(EnsembleError::InvalidConfig("placements must be >= 1".into()));
        }
        if self.observables.is_empty() {
            return Err(EnsembleError::InvalidConfig("no observables selected".into()));
        }
        let spec = self.spec()?;
        build_tasks(&spec, &self.observables, self.placements)?;
        self.trajectory_params()
            .validate()
            .map_err(|e| EnsembleError::InvalidConfig(e.to_string()))
    }

    /// Stable fingerprint over everything that determines record values.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(&(
            SCHEMA_VERSION,
            self.lattice,
            self.gamma.to_bits(),
            self.trajectories,
            self.base_seed,
            &self.mode,
            self.horizon().to_bits(),
            &self.observables,
            self.placements,
        ))
        .expect("serializable config");
        format!("{:016x}", fnv1a(canonical.as_bytes()))
    }
}

const SCHEMA_VERSION: u32 = 2;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// One observable value with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub trajectory: u64,
    pub placement: u32,
    pub kind: ObservableKind,
    pub geometry: Geometry,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryFailure {
    pub trajectory: u64,
    pub message: String,
}

/// The persisted ensemble: records in trajectory order plus any recorded
/// per-trajectory failures.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleSet {
    pub fingerprint: String,
    pub records: Vec<SampleRecord>,
    pub failures: Vec<TrajectoryFailure>,
}

impl SampleSet {
    /// Pooled values of one observable/geometry, in (trajectory, placement)
    /// order.
    pub fn values(&self, kind: ObservableKind, geometry: Geometry) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.kind == kind && r.geometry == geometry)
            .map(|r| r.value)
            .collect()
    }

    /// Values of one observable restricted to a single placement: one value
    /// per trajectory, independent across entries. KS-type tests use these;
    /// pooled placements within a trajectory are correlated.
    pub fn placement_values(
        &self,
        kind: ObservableKind,
        geometry: Geometry,
        placement: u32,
    ) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.kind == kind && r.geometry == geometry && r.placement == placement)
            .map(|r| r.value)
            .collect()
    }

    /// Join two observables on (trajectory, placement); both must have been
    /// evaluated over the same geometry.
    pub fn paired_values(
        &self,
        kind_a: ObservableKind,
        kind_b: ObservableKind,
        geometry: Geometry,
    ) -> Vec<(f64, f64)> {
        let mut right = std::collections::HashMap::new();
        for r in self.records.iter().filter(|r| r.kind == kind_b && r.geometry == geometry) {
            right.insert((r.trajectory, r.placement), r.value);
        }
        self.records
            .iter()
            .filter(|r| r.kind == kind_a && r.geometry == geometry)
            .filter_map(|r| right.get(&(r.trajectory, r.placement)).map(|&b| (r.value, b)))
            .collect()
    }
}

/// Sidecar metadata written next to the samples CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMetadata {
    pub fingerprint: String,
    pub config: ExperimentConfig,
    pub code_version: String,
    pub complete: bool,
    pub records: usize,
    pub failures: Vec<TrajectoryFailure>,
    pub wall_seconds: f64,
}

enum PlacementData {
    Strips(Region, Region),
    Pair(PointPair),
}

struct EvalTask {
    kind: ObservableKind,
    geometry: Geometry,
    placement: u32,
    data: PlacementData,
}

fn build_tasks(
    spec: &LatticeSpec,
    observables: &[ObservableSelection],
    placements: u32,
) -> Result<Vec<EvalTask>, EnsembleError> {
    let n = spec.sites();
    let l = spec.lx;
    let mut tasks = Vec::new();
    for sel in observables {
        match (sel.kind, sel.geometry) {
            (
                ObservableKind::Covariance
                | ObservableKind::MutualInformation
                | ObservableKind::RegionEntropy,
                Geometry::StripL4,
            ) => {
                if !spec.is_square() || !l.is_multiple_of(4) {
                    return Err(EnsembleError::InvalidConfig(format!(
                        "strip_L4 needs L divisible by 4, got {l}"
                    )));
                }
                // 2 orientations x 4 offsets spaced L/4.
                for p in 0..placements.min(8) {
                    let orientation = if p < 4 { Axis::X } else { Axis::Y };
                    let offset = (p % 4) as i64 * (l / 4) as i64;
                    let (a, b) = strip_pair(spec, orientation, offset)?;
                    tasks.push(EvalTask {
                        kind: sel.kind,
                        geometry: sel.geometry,
                        placement: p,
                        data: PlacementData::Strips(a, b),
                    });
                }
            }
            (ObservableKind::DensityCorrelation, Geometry::DiagL2) => {
                let d = ((l / 2) as i64, (l / 2) as i64);
                let orbit = point_pairs(spec, d)?;
                let count = placements.min(n as u32);
                for p in 0..count {
                    let site = (p as usize * n) / count as usize;
                    tasks.push(EvalTask {
                        kind: sel.kind,
                        geometry: sel.geometry,
                        placement: p,
                        data: PlacementData::Pair(orbit[site]),
                    });
                }
            }
            (ObservableKind::DensityCorrelation, Geometry::AxisHalfL) => {
                let along_x = point_pairs(spec, ((l / 2) as i64, 0))?;
                let along_y = point_pairs(spec, (0, (spec.ly / 2) as i64))?;
                let count = placements.min(2 * n as u32);
                let half = count.div_ceil(2);
                for p in 0..count {
                    let orbit = if p % 2 == 0 { &along_x } else { &along_y };
                    let site = ((p / 2) as usize * n) / half as usize;
                    tasks.push(EvalTask {
                        kind: sel.kind,
                        geometry: sel.geometry,
                        placement: p,
                        data: PlacementData::Pair(orbit[site]),
                    });
                }
            }
            (kind, geometry) => {
                return Err(EnsembleError::InvalidConfig(format!(
                    "observable {kind} is not defined over geometry {geometry}"
                )));
            }
        }
    }
    Ok(tasks)
}

fn evaluate_tasks(
    state: &CorrelationMatrix,
    tasks: &[EvalTask],
    trajectory: u64,
) -> Result<Vec<SampleRecord>, String> {
    let mut records = Vec::with_capacity(tasks.len());
    for task in tasks {
        let value = match (&task.data, task.kind) {
            (PlacementData::Strips(a, b), ObservableKind::Covariance) => {
                covariance(state, a, b).map_err(|e| e.to_string())?
            }
            (PlacementData::Strips(a, b), ObservableKind::MutualInformation) => {
                mutual_information(state, a, b).map_err(|e| e.to_string())?
            }
            (PlacementData::Strips(a, _), ObservableKind::RegionEntropy) => {
                region_entropy(state, a).map_err(|e| e.to_string())?
            }
            (PlacementData::Pair(pair), ObservableKind::DensityCorrelation) => {
                density_correlation(state, pair)
            }
            _ => unreachable!("tasks validated at construction"),
        };
        records.push(SampleRecord {
            trajectory,
            placement: task.placement,
            kind: task.kind,
            geometry: task.geometry,
            value,
        });
    }
    Ok(records)
}

fn simulate_one(
    config: &ExperimentConfig,
    prop: &Propagator,
    tasks: &[EvalTask],
    trajectory: u64,
) -> Result<Vec<SampleRecord>, String> {
    let spec = *prop.spec();
    let mut state = CorrelationMatrix::init_checkerboard(spec).map_err(|e| e.to_string())?;
    let params = config.trajectory_params();
    let mut rng = TrajectoryRng::new(config.base_seed, trajectory);
    run_trajectory(&mut state, prop, &params, &mut rng).map_err(|e| e.to_string())?;
    evaluate_tasks(&state, tasks, trajectory)
}

/// Run every trajectory of the config in memory. Trajectory i draws from
/// seed stream (base_seed, i); the result does not depend on the worker
/// count.
pub fn run_ensemble(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<SampleSet, EnsembleError> {
    config.validate()?;
    let spec = config.spec()?;
    let tasks = build_tasks(&spec, &config.observables, config.placements)?;
    let prop = Propagator::new(spec, 1.0);
    let missing: Vec<u64> = (0..config.trajectories).collect();
    let (records, failures) = compute_trajectories(config, &prop, &tasks, &missing, workers)?;
    check_failure_cap(&failures, config.trajectories)?;
    Ok(SampleSet { fingerprint: config.fingerprint(), records, failures })
}

/// Run (or resume) an ensemble persisted under `dir` as `samples.csv` plus
/// `metadata.json`. A complete matching run is loaded and returned as-is;
/// missing trajectories are computed and merged in trajectory order.
pub fn run_ensemble_persisted(
    config: &ExperimentConfig,
    dir: &Path,
    workers: usize,
) -> Result<SampleSet, EnsembleError> {
    config.validate()?;
    std::fs::create_dir_all(dir)?;
    let samples_path = dir.join("samples.csv");
    let metadata_path = dir.join("metadata.json");
    let fingerprint = config.fingerprint();

    // A finished run with the same fingerprint is a no-op.
    if let Ok(meta_raw) = std::fs::read_to_string(&metadata_path) {
        if let Ok(meta) = serde_json::from_str::<RunMetadata>(&meta_raw) {
            if meta.fingerprint == fingerprint && meta.complete {
                let records = read_samples(&samples_path)?;
                return Ok(SampleSet { fingerprint, records, failures: meta.failures });
            }
            // Stale metadata: drop everything, the samples cannot be trusted
            // against a different fingerprint.
            if meta.fingerprint != fingerprint {
                let _ = std::fs::remove_file(&samples_path);
            }
        }
        let _ = std::fs::remove_file(&metadata_path);
    }

    let mut existing = if samples_path.exists() {
        match read_samples(&samples_path) {
            Ok(records) => records,
            Err(_) => {
                std::fs::remove_file(&samples_path)?;
                Vec::new()
            }
        }
    } else {
        Vec::new()
    };

    let spec = config.spec()?;
    let tasks = build_tasks(&spec, &config.observables, config.placements)?;
    // Keep only trajectories with a full record complement.
    let mut done = std::collections::BTreeSet::new();
    {
        let mut counts: std::collections::HashMap<u64, usize> =
            std::collections::HashMap::new();
        for r in &existing {
            *counts.entry(r.trajectory).or_default() += 1;
        }
        for (traj, count) in counts {
            if count == tasks.len() && traj < config.trajectories {
                done.insert(traj);
            }
        }
    }
    existing.retain(|r| done.contains(&r.trajectory));
    let missing: Vec<u64> =
        (0..config.trajectories).filter(|t| !done.contains(t)).collect();

    let prop = Propagator::new(spec, 1.0);
    let started = Instant::now();
    let (mut new_records, failures) = if missing.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        compute_trajectories(config, &prop, &tasks, &missing, workers)?
    };

    let mut records = existing;
    records.append(&mut new_records);
    records.sort_by_key(|r| (r.trajectory, r.kind.tag(), r.geometry.tag(), r.placement));
    write_samples(&samples_path, &records)?;

    check_failure_cap(&failures, config.trajectories)?;

    let meta = RunMetadata {
        fingerprint: fingerprint.clone(),
        config: config.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        complete: true,
        records: records.len(),
        failures: failures.clone(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let mut file = std::fs::File::create(&metadata_path)?;
    file.write_all(serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(SampleSet { fingerprint, records, failures })
}

fn compute_trajectories(
    config: &ExperimentConfig,
    prop: &Propagator,
    tasks: &[EvalTask],
    indices: &[u64],
    workers: usize,
) -> Result<(Vec<SampleRecord>, Vec<TrajectoryFailure>), EnsembleError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EnsembleError::InvalidConfig(e.to_string()))?;
    let results: Vec<(u64, Result<Vec<SampleRecord>, String>)> = pool.install(|| {
        indices
            .par_iter()
            .map(|&traj| (traj, simulate_one(config, prop, tasks, traj)))
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (traj, result) in results {
        match result {
            Ok(mut r) => records.append(&mut r),
            Err(message) => failures.push(TrajectoryFailure { trajectory: traj, message }),
        }
    }
    Ok((records, failures))
}

fn check_failure_cap(failures: &[TrajectoryFailure], total: u64) -> Result<(), EnsembleError> {
    if failures.len() as f64 > 0.01 * total as f64 {
        return Err(EnsembleError::TooManyFailures { failed: failures.len(), total });
    }
    Ok(())
}

fn write_samples(path: &Path, records: &[SampleRecord]) -> Result<(), EnsembleError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["traj", "placement", "kind", "geometry", "value"])?;
    for r in records {
        writer.write_record([
            r.trajectory.to_string(),
            r.placement.to_string(),
            r.kind.tag().to_string(),
            r.geometry.tag().to_string(),
            r.value.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Read a samples CSV written by this module.
pub fn read_samples(path: &Path) -> Result<Vec<SampleRecord>, EnsembleError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| -> Result<&str, EnsembleError> {
            row.get(i)
                .ok_or_else(|| EnsembleError::CorruptSamples(format!("missing field {i}")))
        };
        records.push(SampleRecord {
            trajectory: field(0)?
                .parse()
                .map_err(|e| EnsembleError::CorruptSamples(format!("traj: {e}")))?,
            placement: field(1)?
                .parse()
                .map_err(|e| EnsembleError::CorruptSamples(format!("placement: {e}")))?,
            kind: field(2)?.parse().map_err(EnsembleError::CorruptSamples)?,
            geometry: field(3)?.parse().map_err(EnsembleError::CorruptSamples)?,
            value: field(4)?
                .parse()
                .map_err(|e| EnsembleError::CorruptSamples(format!("value: {e}")))?,
        });
    }
    Ok(records)
}

/// Two-sample KS comparison of one observable between consecutive horizons.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StationarityComparison {
    pub horizon_a: f64,
    pub horizon_b: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
}

/// Run matched ensembles (same seeds) at each horizon and compare the
/// distribution of `kind` over `geometry` between consecutive horizons.
pub fn stationarity_probe(
    config: &ExperimentConfig,
    horizons: &[f64],
    kind: ObservableKind,
    geometry: Geometry,
    workers: usize,
) -> Result<Vec<StationarityComparison>, EnsembleError> {
    if horizons.len() < 2 {
        return Err(EnsembleError::InvalidConfig("need at least 2 horizons".into()));
    }
    let mut pooled = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let mut cfg = config.clone();
        cfg.horizon = Some(h);
        let set = run_ensemble(&cfg, workers)?;
        pooled.push((h, set.values(kind, geometry)));
    }
    Ok(pooled
        .windows(2)
        .map(|w| {
            let (ks_statistic, p_value) = ks_test_two_sample(&w[0].1, &w[1].1);
            StationarityComparison {
                horizon_a: w[0].0,
                horizon_b: w[1].0,
                ks_statistic,
                p_value,
            }
        })
        .collect())
}
