//! Sample-directory discovery and the analysis dispatch behind `analyze`.

use std::path::{Path, PathBuf};

use fermiscope::analysis::{
    analyze_critical, analyze_diffusive, analyze_localized, analyze_mutual_information,
    analyze_porter_thomas, default_q_grid,
};
use fermiscope::ensemble::{
    read_samples, Geometry, RunMetadata, SampleSet,
};
use fermiscope::observables::ObservableKind;
use fermiscope::stats::ks_test_two_sample;
use serde::Serialize;

pub struct LoadedPoint {
    pub meta: RunMetadata,
    pub set: SampleSet,
}

/// Load every completed sample point below `root` (subdirectories holding a
/// metadata.json + samples.csv pair).
pub fn discover(root: &Path) -> Result<Vec<LoadedPoint>, String> {
    let mut points = Vec::new();
    let entries =
        std::fs::read_dir(root).map_err(|e| format!("cannot read {}: {e}", root.display()))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("metadata.json").exists())
        .collect();
    dirs.sort();
    for dir in dirs {
        let meta_raw = std::fs::read_to_string(dir.join("metadata.json"))
            .map_err(|e| format!("{}: {e}", dir.display()))?;
        let meta: RunMetadata =
            serde_json::from_str(&meta_raw).map_err(|e| format!("{}: {e}", dir.display()))?;
        let records = read_samples(&dir.join("samples.csv"))
            .map_err(|e| format!("{}: {e}", dir.display()))?;
        points.push(LoadedPoint {
            set: SampleSet {
                fingerprint: meta.fingerprint.clone(),
                records,
                failures: meta.failures.clone(),
            },
            meta,
        });
    }
    if points.is_empty() {
        return Err(format!("no completed sample points under {}", root.display()));
    }
    Ok(points)
}

fn with_observable(
    points: &[LoadedPoint],
    kind: ObservableKind,
    geometry: Geometry,
) -> Vec<(usize, SampleSet)> {
    let mut sets: Vec<(usize, SampleSet)> = points
        .iter()
        .filter(|p| {
            p.meta
                .config
                .observables
                .iter()
                .any(|o| o.kind == kind && o.geometry == geometry)
        })
        .map(|p| (p.meta.config.lattice, p.set.clone()))
        .collect();
    sets.sort_by_key(|(l, _)| *l);
    sets.dedup_by_key(|(l, _)| *l);
    sets
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf, String> {
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let path = out.join(name);
    let json = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    std::fs::write(&path, json).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(path)
}

pub fn write_csv(out: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), String> {
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let path = out.join(name);
    let mut writer = csv::Writer::from_path(&path).map_err(|e| e.to_string())?;
    writer.write_record(header).map_err(|e| e.to_string())?;
    for row in rows {
        writer.write_record(row).map_err(|e| e.to_string())?;
    }
    writer.flush().map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct StationarityReportFile {
    comparisons: Vec<StationarityRow>,
}

#[derive(Serialize)]
struct StationarityRow {
    lattice: usize,
    gamma: f64,
    horizon_a: f64,
    horizon_b: f64,
    ks_statistic: f64,
    p_value: f64,
}

/// Run the requested analysis over the discovered sample points, writing
/// JSON reports plus flat CSV tables into `out`.
pub fn run_analysis(
    points: &[LoadedPoint],
    analysis: &str,
    out: &Path,
    seed: u64,
) -> Result<Vec<PathBuf>, String> {
    let mut written = Vec::new();
    match analysis {
        "diffusive" => {
            let sets = with_observable(points, ObservableKind::Covariance, Geometry::StripL4);
            let report = analyze_diffusive(&sets, seed).map_err(|e| e.to_string())?;
            written.push(write_json(out, "diffusive_report.json", &report)?);
            let rows: Vec<Vec<String>> = report
                .per_size
                .iter()
                .map(|s| {
                    vec![
                        s.lattice.to_string(),
                        s.mean.to_string(),
                        s.mean_err.to_string(),
                        s.variance.to_string(),
                        s.variance_err.to_string(),
                        s.gaussian_ks.to_string(),
                        s.gaussian_p.to_string(),
                    ]
                })
                .collect();
            write_csv(
                out,
                "covariance_table.csv",
                &["L", "mean", "mean_err", "var", "var_err", "gaussian_ks", "gaussian_p"],
                &rows,
            )?;
            written.push(out.join("covariance_table.csv"));
        }
        "porter-thomas" => {
            let sets =
                with_observable(points, ObservableKind::DensityCorrelation, Geometry::DiagL2);
            let report = analyze_porter_thomas(&sets, seed).map_err(|e| e.to_string())?;
            written.push(write_json(out, "porter_thomas_report.json", &report)?);
            let rows: Vec<Vec<String>> = report
                .per_size
                .iter()
                .map(|s| {
                    vec![
                        s.lattice.to_string(),
                        s.z_second_moment.to_string(),
                        s.z_second_moment_err.to_string(),
                        s.ks_distance.to_string(),
                        s.ks_p.to_string(),
                    ]
                })
                .collect();
            write_csv(out, "z_moment_table.csv", &["L", "z2", "z2_err", "ks", "ks_p"], &rows)?;
            written.push(out.join("z_moment_table.csv"));
        }
        "critical" => {
            let sets =
                with_observable(points, ObservableKind::DensityCorrelation, Geometry::DiagL2);
            let report =
                analyze_critical(&sets, &default_q_grid(), seed).map_err(|e| e.to_string())?;
            written.push(write_json(out, "critical_report.json", &report)?);
            let rows: Vec<Vec<String>> = report
                .delta
                .iter()
                .map(|p| {
                    vec![
                        p.q.to_string(),
                        p.value.to_string(),
                        p.error.to_string(),
                        p.chi2_per_dof.to_string(),
                    ]
                })
                .collect();
            write_csv(out, "delta_q_table.csv", &["q", "delta", "delta_err", "chi2_per_dof"], &rows)?;
            written.push(out.join("delta_q_table.csv"));
            let rows: Vec<Vec<String>> = report
                .spectrum
                .iter()
                .map(|p| {
                    vec![
                        p.q.to_string(),
                        p.alpha.to_string(),
                        p.alpha_err.to_string(),
                        p.f.to_string(),
                        p.f_err.to_string(),
                    ]
                })
                .collect();
            write_csv(out, "spectrum_table.csv", &["q", "alpha", "alpha_err", "f", "f_err"], &rows)?;
            written.push(out.join("spectrum_table.csv"));
        }
        "localized" => {
            let strips = with_observable(points, ObservableKind::Covariance, Geometry::StripL4);
            let pairs =
                with_observable(points, ObservableKind::DensityCorrelation, Geometry::AxisHalfL);
            let report = analyze_localized(&strips, &pairs, seed).map_err(|e| e.to_string())?;
            written.push(write_json(out, "localized_report.json", &report)?);
            let mut rows = Vec::new();
            for (tag, branch) in [("G_AB", Some(&report.covariance)), ("C", report.correlation.as_ref())]
            {
                let Some(branch) = branch else { continue };
                for s in &branch.per_separation {
                    rows.push(vec![
                        tag.to_string(),
                        s.separation.to_string(),
                        s.lattice.to_string(),
                        s.mean_ln.to_string(),
                        s.mean_ln_err.to_string(),
                        s.var_ln.to_string(),
                        s.var_ln_err.to_string(),
                    ]);
                }
            }
            write_csv(
                out,
                "localization_table.csv",
                &["observable", "separation", "L", "mean_ln", "mean_ln_err", "var_ln", "var_ln_err"],
                &rows,
            )?;
            written.push(out.join("localization_table.csv"));
        }
        "mutual-info" => {
            let candidates: Vec<&LoadedPoint> = points
                .iter()
                .filter(|p| {
                    p.meta.config.observables.iter().any(|o| {
                        o.kind == ObservableKind::MutualInformation
                            && o.geometry == Geometry::StripL4
                    })
                })
                .collect();
            let Some(point) = candidates.first() else {
                return Err(format!(
                    "missing observable: no {} samples over {} in the input sets",
                    ObservableKind::MutualInformation,
                    Geometry::StripL4
                ));
            };
            let report = analyze_mutual_information(&point.set).map_err(|e| e.to_string())?;
            written.push(write_json(out, "mutual_info_report.json", &report)?);
        }
        "stationarity" => {
            // Pair up points identical except for their horizon.
            let mut rows = Vec::new();
            for i in 0..points.len() {
                for j in (i + 1)..points.len() {
                    let (a, b) = (&points[i], &points[j]);
                    let (ca, cb) = (&a.meta.config, &b.meta.config);
                    if ca.lattice != cb.lattice
                        || ca.gamma != cb.gamma
                        || ca.horizon() == cb.horizon()
                    {
                        continue;
                    }
                    let va = a.set.values(ObservableKind::Covariance, Geometry::StripL4);
                    let vb = b.set.values(ObservableKind::Covariance, Geometry::StripL4);
                    if va.is_empty() || vb.is_empty() {
                        continue;
                    }
                    let (ks_statistic, p_value) = ks_test_two_sample(&va, &vb);
                    rows.push(StationarityRow {
                        lattice: ca.lattice,
                        gamma: ca.gamma,
                        horizon_a: ca.horizon().min(cb.horizon()),
                        horizon_b: ca.horizon().max(cb.horizon()),
                        ks_statistic,
                        p_value,
                    });
                }
            }
            if rows.is_empty() {
                return Err("no matched horizon pairs with G_AB samples found".into());
            }
            written.push(write_json(
                out,
                "stationarity_report.json",
                &StationarityReportFile { comparisons: rows },
            )?);
        }
        other => {
            return Err(format!(
                "unknown analysis `{other}` (try diffusive, porter-thomas, critical, \
                 localized, mutual-info, stationarity)"
            ))
        }
    }
    Ok(written)
}
