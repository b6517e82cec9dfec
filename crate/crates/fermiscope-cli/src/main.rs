//! Command-line front end: simulation campaigns, statistical analysis,
//! reference cross-checks, and plot-ready data bundles.

mod analyze;
mod config;
mod plots;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use fermiscope::campaigns::CampaignPoint;
use fermiscope::dynamics::{StepMode, TrajectoryParams};
use fermiscope::ensemble::run_ensemble_persisted;
use fermiscope::lattice::LatticeSpec;
use fermiscope::oracle::coupled_trajectory_check;
use serde::Serialize;

/// Exit codes: 0 success, 2 config error, 3 validation failure, 4 runtime
/// failure.
const EXIT_CONFIG: i32 = 2;
const EXIT_VALIDATION: i32 = 3;
const EXIT_RUNTIME: i32 = 4;

#[derive(Parser)]
#[command(name = "fermiscope", version, about = "Monitored free-fermion trajectory campaigns")]
struct Cli {
    /// Worker threads (falls back to FERMISCOPE_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run ensemble campaigns from a config file or a named preset.
    Simulate {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Output directory; one subdirectory per (gamma, L) point.
        #[arg(long)]
        out: PathBuf,
        /// Override the base seed of every point.
        #[arg(long)]
        seed: Option<u64>,
        /// Reuse partially written outputs (resume is also the default).
        #[arg(long)]
        resume: bool,
    },
    /// Produce statistics reports from a directory of sample points.
    Analyze {
        #[arg(long)]
        samples: PathBuf,
        /// One of: diffusive, porter-thomas, critical, localized,
        /// mutual-info, stationarity.
        #[arg(long)]
        analysis: String,
        #[arg(long)]
        out: PathBuf,
        /// Seed of the bootstrap resampler.
        #[arg(long, default_value_t = 20260808)]
        seed: u64,
    },
    /// Cross-check the Gaussian simulator against the dense many-body
    /// reference on small lattices.
    OracleCheck {
        #[arg(long, default_value_t = 12)]
        max_sites: usize,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Emit plot-ready CSV bundles (one per figure panel) from reports.
    PlotData {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    code_version: String,
    base_seed_override: Option<u64>,
    started_unix: u64,
    finished_unix: u64,
    points: Vec<ManifestPoint>,
}

#[derive(Serialize)]
struct ManifestPoint {
    name: String,
    dir: String,
    fingerprint: String,
    records: usize,
    failures: usize,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn resolve_workers(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("FERMISCOPE_WORKERS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
        .max(1)
}

fn main() {
    let cli = Cli::parse();
    let workers = resolve_workers(cli.workers);
    let code = match cli.command {
        Command::Simulate { config, preset, out, seed, resume } => {
            cmd_simulate(config.as_deref(), preset.as_deref(), &out, seed, resume, workers)
        }
        Command::Analyze { samples, analysis, out, seed } => {
            cmd_analyze(&samples, &analysis, &out, seed)
        }
        Command::OracleCheck { max_sites, seeds } => cmd_oracle_check(max_sites, seeds),
        Command::PlotData { reports, out } => cmd_plot_data(&reports, &out),
    };
    std::process::exit(code);
}

fn cmd_simulate(
    config: Option<&Path>,
    preset: Option<&str>,
    out: &Path,
    seed: Option<u64>,
    _resume: bool,
    workers: usize,
) -> i32 {
    let points: Vec<CampaignPoint> = match (config, preset) {
        (Some(path), None) => match config::CampaignFile::load(path).and_then(|f| f.points()) {
            Ok(points) => points,
            Err(e) => {
                eprintln!("config error: {e}");
                return EXIT_CONFIG;
            }
        },
        (None, Some(name)) => match config::preset_points(name) {
            Ok(points) => points,
            Err(e) => {
                eprintln!("config error: {e}");
                return EXIT_CONFIG;
            }
        },
        _ => {
            eprintln!("config error: exactly one of --config or --preset is required");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("runtime error: cannot create {}: {e}", out.display());
        return EXIT_RUNTIME;
    }
    let started_unix = now_unix();
    let mut manifest_points = Vec::with_capacity(points.len());
    for mut point in points {
        if let Some(seed) = seed {
            point.config.base_seed = seed;
        }
        let dir = out.join(&point.name);
        eprintln!(
            "simulate {}: L={} gamma={} trajectories={}",
            point.name, point.config.lattice, point.config.gamma, point.config.trajectories
        );
        match run_ensemble_persisted(&point.config, &dir, workers) {
            Ok(set) => {
                manifest_points.push(ManifestPoint {
                    name: point.name.clone(),
                    dir: dir.display().to_string(),
                    fingerprint: set.fingerprint.clone(),
                    records: set.records.len(),
                    failures: set.failures.len(),
                });
            }
            Err(e) => {
                eprintln!("runtime error in {}: {e}", point.name);
                return EXIT_RUNTIME;
            }
        }
    }
    let manifest = RunManifest {
        command: "simulate".into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        base_seed_override: seed,
        started_unix,
        finished_unix: now_unix(),
        points: manifest_points,
    };
    match serde_json::to_string_pretty(&manifest) {
        Ok(json) => {
            if let Err(e) = std::fs::write(out.join("manifest.json"), json) {
                eprintln!("runtime error: manifest: {e}");
                return EXIT_RUNTIME;
            }
        }
        Err(e) => {
            eprintln!("runtime error: manifest: {e}");
            return EXIT_RUNTIME;
        }
    }
    println!("simulate complete: {} point(s) under {}", manifest.points.len(), out.display());
    0
}

fn cmd_analyze(samples: &Path, analysis: &str, out: &Path, seed: u64) -> i32 {
    let points = match analyze::discover(samples) {
        Ok(points) => points,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    match analyze::run_analysis(&points, analysis, out, seed) {
        Ok(written) => {
            for path in &written {
                println!("wrote {}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("analysis error: {e}");
            if e.starts_with("unknown analysis") {
                EXIT_CONFIG
            } else {
                EXIT_VALIDATION
            }
        }
    }
}

fn cmd_oracle_check(max_sites: usize, seeds: u64) -> i32 {
    let shapes = [(2usize, 2usize), (2, 3), (6, 1)];
    let gammas = [0.5, 2.93, 4.5];
    let mut worst = 0.0f64;
    for (lx, ly) in shapes {
        if lx * ly > max_sites {
            continue;
        }
        let spec = match LatticeSpec::rect(lx, ly) {
            Ok(spec) => spec,
            Err(e) => {
                eprintln!("config error: {e}");
                return EXIT_CONFIG;
            }
        };
        for gamma in gammas {
            let params = TrajectoryParams { gamma, horizon: 4.0, mode: StepMode::EventDriven };
            match coupled_trajectory_check(&spec, &params, 0xC0FFEE, seeds, 1e-8) {
                Ok(report) if report.passed() => {
                    worst = worst.max(report.max_deviation);
                    println!(
                        "PASS {lx}x{ly} gamma={gamma}: {} events, max deviation {:.3e}",
                        report.events, report.max_deviation
                    );
                }
                Ok(report) => {
                    let failure = report.failure.unwrap();
                    eprintln!(
                        "FAIL {lx}x{ly} gamma={gamma}: seed {} event {} t={:.3} site {} deviation {:.3e}",
                        failure.seed,
                        failure.event,
                        failure.time,
                        failure.site,
                        failure.deviation
                    );
                    return EXIT_VALIDATION;
                }
                Err(e) => {
                    eprintln!("runtime error: {e}");
                    return EXIT_RUNTIME;
                }
            }
        }
    }
    println!("oracle check passed (worst deviation {worst:.3e})");
    0
}

fn cmd_plot_data(reports: &Path, out: &Path) -> i32 {
    match plots::emit_bundles(reports, out) {
        Ok(count) => {
            println!("wrote {count} plot bundles to {}", out.display());
            0
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            EXIT_RUNTIME
        }
    }
}
