//! Precompute (or resume) the campaign sample caches consumed by the
//! acceptance suite. Usage: warm_cache [name-substring-filter]

use fermiscope::campaigns::{acceptance_points, default_cache_dir, point_dir};
use fermiscope::ensemble::run_ensemble_persisted;
use std::time::Instant;

fn main() {
    let filter = std::env::args().nth(1).unwrap_or_default();
    let root = default_cache_dir();
    std::fs::create_dir_all(&root).expect("create cache dir");
    println!("cache root: {}", root.display());
    for point in acceptance_points() {
        if !point.name.contains(&filter) {
            continue;
        }
        let dir = point_dir(&root, &point);
        let t0 = Instant::now();
        match run_ensemble_persisted(&point.config, &dir, 1) {
            Ok(set) => println!(
                "{:28} {:6} records, {:3} failures, {:8.1} s",
                point.name,
                set.records.len(),
                set.failures.len(),
                t0.elapsed().as_secs_f64()
            ),
            Err(e) => {
                eprintln!("{:28} FAILED: {e}", point.name);
                std::process::exit(4);
            }
        }
    }
    println!("cache warm");
}
