//! Plot-ready CSV bundles, one file per figure panel. Consumes the JSON
//! reports produced by `analyze`; panels without a matching report are
//! emitted as header-only files.

use std::path::Path;

use fermiscope::analysis::{
    CriticalReport, DiffusiveReport, LocalizedBranch, LocalizedReport, PorterThomasReport,
};
use fermiscope::stats::{porter_thomas, EmpiricalDistribution};

use crate::analyze::write_csv;

fn load_report<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Option<T> {
    let raw = std::fs::read_to_string(dir.join(name)).ok()?;
    serde_json::from_str(&raw).ok()
}

fn histogram_rows(label: String, hist: &EmpiricalDistribution) -> Vec<Vec<String>> {
    hist.densities()
        .iter()
        .zip(hist.edges().windows(2))
        .map(|(&density, edge)| {
            vec![
                label.clone(),
                (0.5 * (edge[0] + edge[1])).to_string(),
                density.to_string(),
            ]
        })
        .collect()
}

pub fn emit_bundles(reports: &Path, out: &Path) -> Result<usize, String> {
    let diffusive: Option<DiffusiveReport> = load_report(reports, "diffusive_report.json");
    let pt: Option<PorterThomasReport> = load_report(reports, "porter_thomas_report.json");
    let critical: Option<CriticalReport> = load_report(reports, "critical_report.json");
    let localized: Option<LocalizedReport> = load_report(reports, "localized_report.json");
    let mut emitted = 0usize;

    // Panel 1a: covariance distributions per size (diffusive phase).
    let rows = diffusive
        .as_ref()
        .map(|r| {
            r.per_size
                .iter()
                .flat_map(|s| histogram_rows(s.lattice.to_string(), &s.histogram))
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    write_csv(out, "fig1a.csv", &["L", "bin_center", "density"], &rows)?;
    emitted += 1;

    // Panel 1b: size-independence of var(G_AB); inset: mean vs L.
    let rows = diffusive
        .as_ref()
        .map(|r| {
            r.per_size
                .iter()
                .map(|s| {
                    vec![
                        s.lattice.to_string(),
                        s.variance.to_string(),
                        s.variance_err.to_string(),
                    ]
                })
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    write_csv(out, "fig1b.csv", &["L", "var", "var_err"], &rows)?;
    emitted += 1;
    let rows = diffusive
        .as_ref()
        .map(|r| {
            r.per_size
                .iter()
                .map(|s| {
                    vec![s.lattice.to_string(), s.mean.to_string(), s.mean_err.to_string()]
                })
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    write_csv(out, "fig1b_inset.csv", &["L", "mean", "mean_err"], &rows)?;
    emitted += 1;

    // Panel 1c: normalized density-correlation distribution plus the
    // analytic reference density and the second-moment inset.
    let rows = pt
        .as_ref()
        .map(|r| {
            r.per_size
                .iter()
                .flat_map(|s| histogram_rows(s.lattice.to_string(), &s.histogram))
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    write_csv(out, "fig1c.csv", &["L", "bin_center", "density"], &rows)?;
    emitted += 1;
    let rows: Vec<Vec<String>> = if pt.is_some() {
        (1..=800)
            .map(|i| {
                let z = 0.01 * i as f64;
                vec![z.to_string(), porter_thomas(z).unwrap().to_string()]
            })
            .collect()
    } else {
        Vec::new()
    };
    write_csv(out, "fig1c_reference.csv", &["z", "density"], &rows)?;
    emitted += 1;
    let rows = pt
        .as_ref()
        .map(|r| {
            r.per_size
                .iter()
                .map(|s| {
                    vec![
                        s.lattice.to_string(),
                        s.z_second_moment.to_string(),
                        s.z_second_moment_err.to_string(),
                    ]
                })
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    write_csv(out, "fig1c_inset.csv", &["L", "z2", "z2_err"], &rows)?;
    emitted += 1;

    // Panels 2a-2c: localized-phase ln G_AB distribution, typical decay,
    // and log-variance growth.
    let strip_branch = localized.as_ref().map(|r| &r.covariance);
    let rows = strip_branch
        .map(|b| {
            b.per_separation
                .iter()
                .flat_map(|s| histogram_rows(s.lattice.to_string(), &s.histogram))
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    write_csv(out, "fig2a.csv", &["L", "bin_center", "density"], &rows)?;
    emitted += 1;
    let branch_rows = |b: &LocalizedBranch, variance: bool| {
        b.per_separation
            .iter()
            .map(|s| {
                let (v, e) =
                    if variance { (s.var_ln, s.var_ln_err) } else { (s.mean_ln, s.mean_ln_err) };
                vec![s.lattice.to_string(), v.to_string(), e.to_string()]
            })
            .collect::<Vec<_>>()
    };
    let rows = strip_branch.map(|b| branch_rows(b, false)).unwrap_or_default();
    write_csv(out, "fig2b.csv", &["L", "mean_ln", "mean_ln_err"], &rows)?;
    emitted += 1;
    let rows = strip_branch.map(|b| branch_rows(b, true)).unwrap_or_default();
    write_csv(out, "fig2c.csv", &["L", "var_ln", "var_ln_err"], &rows)?;
    emitted += 1;

    // Panels 3a-3c: critical-point scale invariance and multifractality.
    let rows = critical
        .as_ref()
        .map(|r| {
            r.ln_covariance_histograms
                .iter()
                .flat_map(|(l, h)| histogram_rows(l.to_string(), h))
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    write_csv(out, "fig3a.csv", &["L", "bin_center", "density"], &rows)?;
    emitted += 1;
    let rows = critical
        .as_ref()
        .map(|r| {
            r.delta
                .iter()
                .map(|p| vec![p.q.to_string(), p.value.to_string(), p.error.to_string()])
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    write_csv(out, "fig3b.csv", &["q", "delta", "delta_err"], &rows)?;
    emitted += 1;
    let rows = critical
        .as_ref()
        .map(|r| {
            r.spectrum
                .iter()
                .map(|p| {
                    vec![
                        p.alpha.to_string(),
                        p.f.to_string(),
                        p.alpha_err.to_string(),
                        p.f_err.to_string(),
                    ]
                })
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    write_csv(out, "fig3c.csv", &["alpha", "f", "alpha_err", "f_err"], &rows)?;
    emitted += 1;

    // Panels S3a-S3d: the two-point comparison in the localized phase.
    let corr_branch = localized.as_ref().and_then(|r| r.correlation.as_ref());
    let rows = corr_branch
        .map(|b| {
            b.per_separation
                .iter()
                .flat_map(|s| histogram_rows(s.separation.to_string(), &s.histogram))
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    write_csv(out, "figS3a.csv", &["separation", "bin_center", "density"], &rows)?;
    emitted += 1;
    let mut rows = Vec::new();
    if let Some(r) = localized.as_ref() {
        for (tag, branch) in [("G_AB", Some(&r.covariance)), ("C", r.correlation.as_ref())] {
            let Some(branch) = branch else { continue };
            for s in &branch.per_separation {
                for row in histogram_rows(s.separation.to_string(), &s.histogram) {
                    rows.push(vec![tag.to_string(), row[0].clone(), row[1].clone(), row[2].clone()]);
                }
            }
        }
    }
    write_csv(out, "figS3b.csv", &["observable", "separation", "bin_center", "density"], &rows)?;
    emitted += 1;
    let mut mean_rows = Vec::new();
    let mut var_rows = Vec::new();
    if let Some(r) = localized.as_ref() {
        for (tag, branch) in [("G_AB", Some(&r.covariance)), ("C", r.correlation.as_ref())] {
            let Some(branch) = branch else { continue };
            for s in &branch.per_separation {
                mean_rows.push(vec![
                    tag.to_string(),
                    s.separation.to_string(),
                    s.mean_ln.to_string(),
                    s.mean_ln_err.to_string(),
                ]);
                var_rows.push(vec![
                    tag.to_string(),
                    s.separation.to_string(),
                    s.var_ln.to_string(),
                    s.var_ln_err.to_string(),
                ]);
            }
        }
    }
    write_csv(out, "figS3c.csv", &["observable", "separation", "mean_ln", "mean_ln_err"], &mean_rows)?;
    emitted += 1;
    write_csv(out, "figS3d.csv", &["observable", "separation", "var_ln", "var_ln_err"], &var_rows)?;
    emitted += 1;

    Ok(emitted)
}
