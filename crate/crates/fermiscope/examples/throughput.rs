//! Quick wall-clock probe of trajectory cost at campaign scale.

use fermiscope::dynamics::{run_trajectory, Propagator, StepMode, TrajectoryParams, TrajectoryRng};
use fermiscope::gaussian::CorrelationMatrix;
use fermiscope::lattice::LatticeSpec;
use std::time::Instant;

fn main() {
    // Pure-evolution cost (no measurements).
    for l in [16usize, 20, 24] {
        let spec = LatticeSpec::square(l).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let steps = 4 * l * 10; // T = 4L at dt = 0.1
        let t0 = Instant::now();
        for _ in 0..steps {
            prop.evolve(&mut state, 0.1);
        }
        let dt = t0.elapsed().as_secs_f64();
        println!("L={l:2} evolve-only: {dt:6.2} s per trajectory-equivalent ({:.3} ms/step)",
                 dt * 1e3 / steps as f64);
    }
    for (l, gamma) in [(24usize, 2.93f64), (24, 4.5)] {
        let spec = LatticeSpec::square(l).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let params = TrajectoryParams {
            gamma,
            horizon: 4.0 * l as f64,
            mode: StepMode::Batched { dt: 0.1 },
        };
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let mut rng = TrajectoryRng::new(1, 0);
        let t0 = Instant::now();
        let events = run_trajectory(&mut state, &prop, &params, &mut rng).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "L={l:2} gamma={gamma:4}: {dt:7.2} s/traj, {events} events ({:.1} us/event incl. evolve)",
            dt * 1e6 / events as f64
        );
    }
}
