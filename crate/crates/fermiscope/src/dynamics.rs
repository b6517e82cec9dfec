//! Continuous-time stochastic evolution: exact unitary propagation under the
//! tight-binding Hamiltonian interleaved with Poisson-timed projective
//! measurements of site occupancy, sampled by the Born rule.
//!
//! Two stepping modes are provided. Event-driven stepping alternates
//! exponential waiting times with single measurements and is exact; batched
//! stepping advances by a fixed `dt` and measures each site independently
//! with probability `1 - exp(-gamma dt)` per step, amortizing propagation
//! cost over many measurements. Batched collapses are accumulated as a
//! low-rank pending update and flushed through a Hermitian rank-k kernel.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{CorrelationMatrix, GaussianError};
use crate::lattice::LatticeSpec;

/// Events between G <- (G + G^dag)/2 hygiene passes.
const RESYMMETRIZE_EVERY: u64 = 1000;
/// Pending-update capacity of the batched collapse engine.
const PANEL_CAPACITY: usize = 64;
/// Born probabilities within this distance of 0 or 1 force the outcome.
const FORCE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("state corrupted: Born probability {p} at site {site} outside [0, 1]")]
    CorruptedProbability { site: usize, p: f64 },
    #[error("invalid trajectory parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// Time stepping scheme for a trajectory.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum StepMode {
    EventDriven,
    Batched { dt: f64 },
}

/// Parameters of one stochastic trajectory.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryParams {
    /// Measurement rate per site (units of 1/time, J = 1).
    pub gamma: f64,
    /// Total evolution time.
    pub horizon: f64,
    pub mode: StepMode,
}

impl TrajectoryParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(DynamicsError::InvalidParams(format!("gamma = {}", self.gamma)));
        }
        if self.horizon.is_nan() || self.horizon <= 0.0 {
            return Err(DynamicsError::InvalidParams(format!("horizon = {}", self.horizon)));
        }
        if let StepMode::Batched { dt } = self.mode {
            if dt.is_nan() || dt <= 0.0 {
                return Err(DynamicsError::InvalidParams(format!("dt = {dt}")));
            }
        }
        Ok(())
    }
}

/// One projective measurement: where, when, what was found, and the Born
/// probability of outcome 1 just before the collapse.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MeasurementEvent {
    pub time: f64,
    pub site: usize,
    pub outcome: bool,
    pub probability: f64,
}

/// Per-trajectory random streams. Waiting times, site choices, and outcomes
/// draw from independent counter-based streams so that a change of stepping
/// mode does not scramble unrelated draws.
pub struct TrajectoryRng {
    pub waits: ChaCha8Rng,
    pub sites: ChaCha8Rng,
    pub outcomes: ChaCha8Rng,
}

impl TrajectoryRng {
    pub fn new(base_seed: u64, trajectory_index: u64) -> Self {
        let stream = |purpose: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
            rng.set_stream(trajectory_index.wrapping_mul(4).wrapping_add(purpose));
            rng
        };
        Self { waits: stream(0), sites: stream(1), outcomes: stream(2) }
    }
}

/// Waiting time to the next measurement anywhere on the lattice: exponential
/// with total rate gamma * N. Consumes exactly one uniform draw; gamma = 0
/// yields +inf (no events).
pub fn sample_waiting_time(rng: &mut impl Rng, gamma: f64, sites: usize) -> f64 {
    let u: f64 = rng.random();
    if gamma <= 0.0 {
        return f64::INFINITY;
    }
    -(1.0 - u).ln() / (gamma * sites as f64)
}

/// Build the single-particle hopping matrix h with -J on each directed
/// nearest-neighbor bond plus its conjugate. Degenerate extents (L = 1, 2
/// along an axis) accumulate doubled bonds, matching the lattice dispersion.
pub fn hopping_matrix(spec: &LatticeSpec, j: f64) -> Array2<C64> {
    let n = spec.sites();
    let mut h = Array2::<C64>::zeros((n, n));
    let hop = C64::new(-j, 0.0);
    for a in 0..n {
        for (dx, dy) in [(1i64, 0i64), (0, 1)] {
            let b = spec.translate(a, dx, dy);
            h[(a, b)] += hop;
            h[(b, a)] += hop;
        }
    }
    h
}

/// Exact unitary propagator for the tight-binding Hamiltonian, applied in
/// momentum space: G <- U G U^dag with U = exp(+i h t).
pub struct Propagator {
    spec: LatticeSpec,
    hopping: f64,
    dispersion: Vec<f64>,
    fft_x: (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>),
    fft_y: (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>),
}

impl Propagator {
    pub fn new(spec: LatticeSpec, hopping: f64) -> Self {
        let (lx, ly) = (spec.lx, spec.ly);
        let mut dispersion = Vec::with_capacity(spec.sites());
        for kx in 0..lx {
            let cx = (2.0 * std::f64::consts::PI * kx as f64 / lx as f64).cos();
            for ky in 0..ly {
                let cy = (2.0 * std::f64::consts::PI * ky as f64 / ly as f64).cos();
                dispersion.push(-2.0 * hopping * (cx + cy));
            }
        }
        let mut planner = FftPlanner::new();
        let fft_x = (planner.plan_fft_forward(lx), planner.plan_fft_inverse(lx));
        let fft_y = (planner.plan_fft_forward(ly), planner.plan_fft_inverse(ly));
        Self { spec, hopping, dispersion, fft_x, fft_y }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    /// Dispersion table over the momentum grid, row-major (kx, ky).
    pub fn dispersion(&self) -> &[f64] {
        &self.dispersion
    }

    /// G <- U G U^dag. Computed as three passes: right-multiply all rows by
    /// U^dag in momentum space, conjugate-transpose, right-multiply again.
    pub fn evolve(&self, state: &mut CorrelationMatrix, t: f64) {
        let mut scratch = self.make_scratch();
        self.evolve_with_scratch(state, t, &mut scratch);
    }

    /// Reusable work buffers for [`evolve_with_scratch`]; trajectory loops
    /// hold one across all their steps.
    pub(crate) fn make_scratch(&self) -> EvolveScratch {
        let work = self
            .fft_x
            .0
            .get_inplace_scratch_len()
            .max(self.fft_x.1.get_inplace_scratch_len())
            .max(self.fft_y.0.get_inplace_scratch_len())
            .max(self.fft_y.1.get_inplace_scratch_len());
        let n = self.spec.sites();
        EvolveScratch {
            transposed: vec![C64::new(0.0, 0.0); n * n],
            fft_work: vec![C64::new(0.0, 0.0); work],
            phase_t: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub(crate) fn evolve_with_scratch(
        &self,
        state: &mut CorrelationMatrix,
        t: f64,
        scratch: &mut EvolveScratch,
    ) {
        if t == 0.0 {
            return;
        }
        debug_assert_eq!(*state.spec(), self.spec);
        // The row pass computes r <- FFT2(conj(phase)/N * IFFT2(r)), which is
        // r U^dag for U diagonalized by plane waves with phases e^{+i eps t}.
        // The table is laid out x-major to match the transposed middle stage.
        let n = self.spec.sites();
        let (lx, ly) = (self.spec.lx, self.spec.ly);
        let scale = 1.0 / n as f64;
        for kx in 0..lx {
            for ky in 0..ly {
                scratch.phase_t[ky * lx + kx] =
                    C64::from_polar(scale, -self.dispersion[kx * ly + ky] * t);
            }
        }
        let g = state.matrix_mut();
        self.right_multiply_all(g.as_slice_mut().expect("standard layout"), scratch);
        conj_transpose_in_place(g);
        self.right_multiply_all(g.as_slice_mut().expect("standard layout"), scratch);
    }

    /// Apply row <- FFT2(phase_t * IFFT2(row)) to every row of the matrix,
    /// batching each transform stage into one chunked FFT call. Grids sit
    /// transposed (x-major) through the middle stages. Transforms are
    /// unnormalized with 1/N folded into the phase table.
    fn right_multiply_all(&self, m: &mut [C64], scratch: &mut EvolveScratch) {
        let (lx, ly) = (self.spec.lx, self.spec.ly);
        let n = lx * ly;
        let rows = m.len() / n;
        if ly > 1 {
            self.fft_y.1.process_with_scratch(m, &mut scratch.fft_work);
        }
        for r in 0..rows {
            let src = &m[r * n..(r + 1) * n];
            let dst = &mut scratch.transposed[r * n..(r + 1) * n];
            for x in 0..lx {
                for y in 0..ly {
                    dst[y * lx + x] = src[x * ly + y];
                }
            }
        }
        let t = &mut scratch.transposed[..rows * n];
        if lx > 1 {
            self.fft_x.1.process_with_scratch(t, &mut scratch.fft_work);
        }
        for r in 0..rows {
            for (z, p) in t[r * n..(r + 1) * n].iter_mut().zip(&scratch.phase_t) {
                *z *= *p;
            }
        }
        if lx > 1 {
            self.fft_x.0.process_with_scratch(t, &mut scratch.fft_work);
        }
        for r in 0..rows {
            let src = &t[r * n..(r + 1) * n];
            let dst = &mut m[r * n..(r + 1) * n];
            for y in 0..ly {
                for x in 0..lx {
                    dst[x * ly + y] = src[y * lx + x];
                }
            }
        }
        if ly > 1 {
            self.fft_y.0.process_with_scratch(m, &mut scratch.fft_work);
        }
    }
}

pub(crate) struct EvolveScratch {
    transposed: Vec<C64>,
    fft_work: Vec<C64>,
    phase_t: Vec<C64>,
}

fn conj_transpose_in_place(g: &mut Array2<C64>) {
    let n = g.nrows();
    for a in 0..n {
        g[(a, a)] = g[(a, a)].conj();
        for b in (a + 1)..n {
            let upper = g[(a, b)].conj();
            let lower = g[(b, a)].conj();
            g[(a, b)] = lower;
            g[(b, a)] = upper;
        }
    }
}

/// Projectively measure the occupancy of `site`, drawing the outcome from
/// `rng` by the Born rule. Rank-1 collapse applied immediately; the returned
/// event carries time 0 (callers tracking trajectory time fill it in).
pub fn measure_site(
    state: &mut CorrelationMatrix,
    site: usize,
    rng: &mut impl Rng,
) -> Result<MeasurementEvent, DynamicsError> {
    let u: f64 = rng.random();
    measure_site_with_uniform(state, site, u)
}

/// Deterministic-variant of [`measure_site`] consuming an explicit uniform
/// draw; the coupling harness feeds identical uniforms to this and to the
/// many-body reference simulator.
pub fn measure_site_with_uniform(
    state: &mut CorrelationMatrix,
    site: usize,
    u: f64,
) -> Result<MeasurementEvent, DynamicsError> {
    let n = state.sites();
    let p = born_probability(state.matrix(), site)?;
    let outcome = decide_outcome(p, u);
    let g = state.matrix_mut();
    let col: Vec<C64> = (0..n).map(|a| g[(a, site)]).collect();
    let row: Vec<C64> = (0..n).map(|b| g[(site, b)]).collect();
    if outcome {
        // G' = G - G_{ax} G_{xb} / p + delta_{ax} delta_{xb}
        let inv = 1.0 / p;
        for a in 0..n {
            let f = col[a] * inv;
            for b in 0..n {
                g[(a, b)] -= f * row[b];
            }
        }
        g[(site, site)] += C64::new(1.0, 0.0);
    } else {
        // G' = G + (delta_{ax} - G_{ax})(delta_{xb} - G_{xb}) / (1-p)
        //        - delta_{ax} delta_{xb}
        let inv = 1.0 / (1.0 - p);
        for a in 0..n {
            let va = (if a == site { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }) - col[a];
            let f = va * inv;
            for b in 0..n {
                let vb = (if b == site { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
                    - row[b];
                g[(a, b)] += f * vb;
            }
        }
        g[(site, site)] -= C64::new(1.0, 0.0);
    }
    Ok(MeasurementEvent { time: 0.0, site, outcome, probability: p })
}

fn born_probability(g: &Array2<C64>, site: usize) -> Result<f64, DynamicsError> {
    let p = g[(site, site)].re;
    if !(-1e-8..=1.0 + 1e-8).contains(&p) || g[(site, site)].im.abs() > 1e-10 {
        return Err(DynamicsError::CorruptedProbability { site, p });
    }
    Ok(p.clamp(0.0, 1.0))
}

pub(crate) fn decide_outcome(p: f64, u: f64) -> bool {
    if p < FORCE_EPS {
        false
    } else if 1.0 - p < FORCE_EPS {
        true
    } else {
        u < p
    }
}

/// Pending Hermitian low-rank update:
/// G_current = G_base + sum_j w_j u_j u_j^dag + unit diagonal corrections.
/// Collapses append one rank-1 term each; `flush` materializes everything
/// into the dense matrix.
struct CollapseEngine {
    n: usize,
    ur: Vec<f64>,
    ui: Vec<f64>,
    weights: Vec<f64>,
    deltas: Vec<(usize, f64)>,
    pending: usize,
    diag: Vec<f64>,
    col_re: Vec<f64>,
    col_im: Vec<f64>,
}

impl CollapseEngine {
    fn new(n: usize) -> Self {
        Self {
            n,
            ur: vec![0.0; PANEL_CAPACITY * n],
            ui: vec![0.0; PANEL_CAPACITY * n],
            weights: vec![0.0; PANEL_CAPACITY],
            deltas: Vec::with_capacity(PANEL_CAPACITY),
            pending: 0,
            diag: vec![0.0; n],
            col_re: vec![0.0; n],
            col_im: vec![0.0; n],
        }
    }

    fn sync_diag(&mut self, g: &Array2<C64>) {
        for a in 0..self.n {
            self.diag[a] = g[(a, a)].re;
        }
    }

    /// Reconstruct the current column at `site` into col_re/col_im:
    /// the base matrix is Hermitian, so its column is conj(row), plus the
    /// pending rank-1 contributions.
    fn reconstruct_column(&mut self, g: &Array2<C64>, site: usize) {
        let n = self.n;
        let row = g.row(site);
        let row = row.as_slice().expect("standard layout");
        for (a, z) in row.iter().enumerate() {
            self.col_re[a] = z.re;
            self.col_im[a] = -z.im;
        }
        for j in 0..self.pending {
            let uj_r = &self.ur[j * n..(j + 1) * n];
            let uj_i = &self.ui[j * n..(j + 1) * n];
            // w_j * u_j * conj(u_j[site])
            let cr = self.weights[j] * uj_r[site];
            let ci = -self.weights[j] * uj_i[site];
            for a in 0..n {
                self.col_re[a] += cr * uj_r[a] - ci * uj_i[a];
                self.col_im[a] += cr * uj_i[a] + ci * uj_r[a];
            }
        }
    }

    fn measure(
        &mut self,
        g: &mut Array2<C64>,
        site: usize,
        u: f64,
    ) -> Result<(bool, f64), DynamicsError> {
        let n = self.n;
        let p = self.diag[site];
        if !(-1e-8..=1.0 + 1e-8).contains(&p) {
            return Err(DynamicsError::CorruptedProbability { site, p });
        }
        let p = p.clamp(0.0, 1.0);
        let outcome = decide_outcome(p, u);
        self.reconstruct_column(g, site);

        let j = self.pending;
        let vr = &mut self.ur[j * n..(j + 1) * n];
        let vi = &mut self.ui[j * n..(j + 1) * n];
        let weight = if outcome {
            vr.copy_from_slice(&self.col_re);
            vi.copy_from_slice(&self.col_im);
            self.deltas.push((site, 1.0));
            -1.0 / p
        } else {
            for a in 0..n {
                vr[a] = -self.col_re[a];
                vi[a] = -self.col_im[a];
            }
            vr[site] += 1.0;
            self.deltas.push((site, -1.0));
            1.0 / (1.0 - p)
        };
        self.weights[j] = weight;
        for a in 0..n {
            self.diag[a] += weight * (vr[a] * vr[a] + vi[a] * vi[a]);
        }
        self.diag[site] = if outcome { 1.0 } else { 0.0 };
        self.pending += 1;
        if self.pending == PANEL_CAPACITY {
            self.flush(g);
        }
        Ok((outcome, p))
    }

    /// Materialize all pending rank-1 terms: Hermitian rank-k update of the
    /// upper triangle, mirror to the lower triangle, apply unit diagonal
    /// corrections, and resynchronize the cached diagonal.
    fn flush(&mut self, g: &mut Array2<C64>) {
        if self.pending == 0 {
            return;
        }
        let n = self.n;
        let k = self.pending;
        {
            let gs = g.as_slice_mut().expect("standard layout");
            herk_upper(gs, n, &self.ur, &self.ui, &self.weights, k);
            mirror_upper(gs, n);
        }
        for &(site, delta) in &self.deltas {
            g[(site, site)] += C64::new(delta, 0.0);
        }
        self.deltas.clear();
        self.pending = 0;
        self.sync_diag(g);
    }
}

/// g[a, b] += sum_j w_j u_j[a] conj(u_j[b]) on the upper triangle (b >= a).
/// Panel vectors are stored split re/im, each contiguous of length n.
fn herk_upper(g: &mut [C64], n: usize, ur: &[f64], ui: &[f64], w: &[f64], k: usize) {
    let mut cr = vec![0.0f64; k];
    let mut ci = vec![0.0f64; k];
    for a in 0..n {
        for j in 0..k {
            cr[j] = w[j] * ur[j * n + a];
            ci[j] = w[j] * ui[j * n + a];
        }
        let row = &mut g[a * n..(a + 1) * n];
        let mut j0 = 0;
        while j0 + 4 <= k {
            let (c0, d0) = (cr[j0], ci[j0]);
            let (c1, d1) = (cr[j0 + 1], ci[j0 + 1]);
            let (c2, d2) = (cr[j0 + 2], ci[j0 + 2]);
            let (c3, d3) = (cr[j0 + 3], ci[j0 + 3]);
            let u0r = &ur[j0 * n..(j0 + 1) * n];
            let u0i = &ui[j0 * n..(j0 + 1) * n];
            let u1r = &ur[(j0 + 1) * n..(j0 + 2) * n];
            let u1i = &ui[(j0 + 1) * n..(j0 + 2) * n];
            let u2r = &ur[(j0 + 2) * n..(j0 + 3) * n];
            let u2i = &ui[(j0 + 2) * n..(j0 + 3) * n];
            let u3r = &ur[(j0 + 3) * n..(j0 + 4) * n];
            let u3i = &ui[(j0 + 3) * n..(j0 + 4) * n];
            for b in a..n {
                let (r0, i0) = (u0r[b], u0i[b]);
                let (r1, i1) = (u1r[b], u1i[b]);
                let (r2, i2) = (u2r[b], u2i[b]);
                let (r3, i3) = (u3r[b], u3i[b]);
                // u_j[a] conj(u_j[b]) with coefficients folded into (c, d).
                let re = c0 * r0 + d0 * i0 + c1 * r1 + d1 * i1
                    + c2 * r2 + d2 * i2 + c3 * r3 + d3 * i3;
                let im = d0 * r0 - c0 * i0 + d1 * r1 - c1 * i1
                    + d2 * r2 - c2 * i2 + d3 * r3 - c3 * i3;
                row[b] += C64::new(re, im);
            }
            j0 += 4;
        }
        while j0 < k {
            let (c0, d0) = (cr[j0], ci[j0]);
            let u0r = &ur[j0 * n..(j0 + 1) * n];
            let u0i = &ui[j0 * n..(j0 + 1) * n];
            for b in a..n {
                let re = c0 * u0r[b] + d0 * u0i[b];
                let im = d0 * u0r[b] - c0 * u0i[b];
                row[b] += C64::new(re, im);
            }
            j0 += 1;
        }
    }
}

fn mirror_upper(g: &mut [C64], n: usize) {
    for a in 0..n {
        for b in (a + 1)..n {
            g[b * n + a] = g[a * n + b].conj();
        }
    }
}

/// Per-event observer hook; receives the materialized state after each
/// collapse. Used by instrumentation, event logs, and the coupling harness.
pub type EventObserver<'a> =
    &'a mut dyn FnMut(&CorrelationMatrix, &MeasurementEvent) -> Result<(), DynamicsError>;

/// Debug event log: `time,site,outcome,p` rows, one per measurement.
pub struct EventLogger {
    writer: csv::Writer<std::fs::File>,
}

impl EventLogger {
    pub fn create(path: &std::path::Path) -> Result<Self, std::io::Error> {
        let mut writer = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
        writer
            .write_record(["time", "site", "outcome", "p"])
            .map_err(std::io::Error::other)?;
        Ok(Self { writer })
    }

    pub fn record(&mut self, event: &MeasurementEvent) -> Result<(), std::io::Error> {
        self.writer
            .write_record([
                event.time.to_string(),
                event.site.to_string(),
                (event.outcome as u8).to_string(),
                event.probability.to_string(),
            ])
            .map_err(std::io::Error::other)
    }

    pub fn finish(mut self) -> Result<(), std::io::Error> {
        self.writer.flush()
    }
}

/// Run one trajectory to its horizon. Returns the measurement-event count.
/// Deterministic given (rng streams, mode, params).
pub fn run_trajectory(
    state: &mut CorrelationMatrix,
    prop: &Propagator,
    params: &TrajectoryParams,
    rng: &mut TrajectoryRng,
) -> Result<u64, DynamicsError> {
    run_trajectory_observed(state, prop, params, rng, None)
}

/// [`run_trajectory`] with an optional per-event observer. With an observer
/// attached, pending updates are flushed before every callback so the
/// observer always sees a fully materialized state.
pub fn run_trajectory_observed(
    state: &mut CorrelationMatrix,
    prop: &Propagator,
    params: &TrajectoryParams,
    rng: &mut TrajectoryRng,
    mut observer: Option<EventObserver<'_>>,
) -> Result<u64, DynamicsError> {
    params.validate()?;
    debug_assert_eq!(state.spec(), prop.spec());
    let n = state.sites();
    let mut events = 0u64;
    let mut since_resym = 0u64;
    let mut scratch = prop.make_scratch();

    match params.mode {
        StepMode::EventDriven => {
            let mut t = 0.0f64;
            loop {
                let tau = sample_waiting_time(&mut rng.waits, params.gamma, n);
                if t + tau >= params.horizon {
                    prop.evolve_with_scratch(state, params.horizon - t, &mut scratch);
                    break;
                }
                prop.evolve_with_scratch(state, tau, &mut scratch);
                t += tau;
                let site = rng.sites.random_range(0..n);
                let u: f64 = rng.outcomes.random();
                let mut event = measure_site_with_uniform(state, site, u)?;
                event.time = t;
                events += 1;
                since_resym += 1;
                if since_resym >= RESYMMETRIZE_EVERY {
                    state.resymmetrize();
                    since_resym = 0;
                }
                if let Some(obs) = observer.as_mut() {
                    obs(state, &event)?;
                }
            }
        }
        StepMode::Batched { dt } => {
            // One measurement round per dt segment, placed at the segment
            // midpoint (each round carries the segment's event probability
            // 1 - e^{-gamma dt}). Rounds at segment edges would either pile
            // collapses at exactly t = T with no re-evolution or leave a
            // measurement-free gap of width dt before T; the continuous-time
            // process does neither.
            let mut engine = CollapseEngine::new(n);
            let mut order: Vec<usize> = (0..n).collect();
            let steps = (params.horizon / dt - 1e-12).ceil().max(1.0) as u64;
            let mut t_now = 0.0f64;
            for s in 0..steps {
                let seg_start = s as f64 * dt;
                let seg_end = ((s + 1) as f64 * dt).min(params.horizon);
                let segment = seg_end - seg_start;
                if segment <= 0.0 {
                    break;
                }
                let mid = 0.5 * (seg_start + seg_end);
                prop.evolve_with_scratch(state, mid - t_now, &mut scratch);
                t_now = mid;
                engine.sync_diag(state.matrix());
                let p_meas = 1.0 - (-params.gamma * segment).exp();
                order.shuffle(&mut rng.sites);
                for &site in order.iter() {
                    if rng.sites.random::<f64>() >= p_meas {
                        continue;
                    }
                    let u: f64 = rng.outcomes.random();
                    let (outcome, probability) =
                        engine.measure(state.matrix_mut(), site, u)?;
                    events += 1;
                    since_resym += 1;
                    if let Some(obs) = observer.as_mut() {
                        engine.flush(state.matrix_mut());
                        let event = MeasurementEvent { time: mid, site, outcome, probability };
                        obs(state, &event)?;
                    }
                }
                engine.flush(state.matrix_mut());
                if since_resym >= RESYMMETRIZE_EVERY {
                    state.resymmetrize();
                    since_resym = 0;
                }
            }
            prop.evolve_with_scratch(state, params.horizon - t_now, &mut scratch);
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use approx::assert_abs_diff_eq;

    fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn waiting_time_inverse_cdf_point() {
        // A fixed uniform u = 1 - e^{-1} must map to tau = 1/(gamma N).
        struct ConstRng(u64);
        impl rand::RngCore for ConstRng {
            fn next_u32(&mut self) -> u32 {
                self.0 as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.0
            }
            fn fill_bytes(&mut self, dest: &mut [u8]) {
                dest.fill(0);
            }
        }
        let u = 1.0 - (-1.0f64).exp();
        // rand maps next_u64 >> 11 onto [0, 1) with 53-bit resolution.
        let raw = ((u * (1u64 << 53) as f64) as u64) << 11;
        let mut rng = ConstRng(raw);
        let tau = sample_waiting_time(&mut rng, 2.0, 5);
        assert_abs_diff_eq!(tau, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn waiting_time_mean_matches_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let gamma = 2.0;
        let n = 5usize; // gamma N = 10
        let mean: f64 =
            (0..draws).map(|_| sample_waiting_time(&mut rng, gamma, n)).sum::<f64>()
                / draws as f64;
        // 3 sigma of the sample mean of Exp(10).
        assert_abs_diff_eq!(mean, 0.1, epsilon = 3.0 * 0.1 / (draws as f64).sqrt());
    }

    #[test]
    fn waiting_time_zero_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_waiting_time(&mut rng, 0.0, 16).is_infinite());
    }

    #[test]
    fn evolve_zero_time_is_identity() {
        let spec = LatticeSpec::square(4).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let before = state.matrix().clone();
        prop.evolve(&mut state, 0.0);
        assert_eq!(max_abs_diff(state.matrix(), &before), 0.0);
    }

    #[test]
    fn evolve_unitarity_roundtrip() {
        let spec = LatticeSpec::square(4).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let before = state.matrix().clone();
        prop.evolve(&mut state, 0.37);
        prop.evolve(&mut state, -0.37);
        assert!(max_abs_diff(state.matrix(), &before) < 1e-10);
    }

    #[test]
    fn evolve_preserves_state_integrity() {
        let spec = LatticeSpec::square(6).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        prop.evolve(&mut state, 1.7);
        assert!(state.purity_defect() < 1e-10);
        assert!(state.hermiticity_defect() < 1e-10);
        assert!(state.filling_defect() < 1e-10);
    }

    #[test]
    fn evolve_matches_dense_exponential() {
        // Single particle at the origin, L = 8, t = 0.3, against U G U^dag
        // built from the eigendecomposition of the hopping matrix.
        let spec = LatticeSpec::square(8).unwrap();
        let n = spec.sites();
        let t = 0.3;
        let prop = Propagator::new(spec, 1.0);
        let mut state = CorrelationMatrix::single_particle(spec, 0);
        prop.evolve(&mut state, t);

        let h = hopping_matrix(&spec, 1.0);
        let (vals, vecs) = crate::linalg::eigh(&h);
        // U = V e^{+i E t} V^dag
        let mut u = Array2::<C64>::zeros((n, n));
        for a in 0..n {
            for b in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for m in 0..n {
                    acc += vecs[(a, m)] * C64::from_polar(1.0, vals[m] * t) * vecs[(b, m)].conj();
                }
                u[(a, b)] = acc;
            }
        }
        let g0 = CorrelationMatrix::single_particle(spec, 0);
        let ug = u.dot(g0.matrix());
        let mut udag = Array2::<C64>::zeros((n, n));
        for a in 0..n {
            for b in 0..n {
                udag[(a, b)] = u[(b, a)].conj();
            }
        }
        let expected = ug.dot(&udag);
        assert!(max_abs_diff(state.matrix(), &expected) < 1e-10);
    }

    #[test]
    fn measure_eigenstate_is_certain() {
        let spec = LatticeSpec::square(2).unwrap();
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let before = state.matrix().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ev = measure_site(&mut state, 0, &mut rng).unwrap();
        assert!(ev.outcome);
        assert_eq!(ev.probability, 1.0);
        assert_eq!(max_abs_diff(state.matrix(), &before), 0.0);
    }

    #[test]
    fn measure_shared_particle_collapse() {
        let spec = LatticeSpec::rect(2, 1).unwrap();
        let g = ndarray::array![
            [C64::new(0.5, 0.0), C64::new(0.5, 0.0)],
            [C64::new(0.5, 0.0), C64::new(0.5, 0.0)],
        ];
        let mut state = CorrelationMatrix::from_matrix(spec, g);
        // Outcome 1 forced through the uniform draw.
        let ev = measure_site_with_uniform(&mut state, 0, 0.25).unwrap();
        assert!(ev.outcome);
        assert_abs_diff_eq!(ev.probability, 0.5, epsilon = 1e-15);
        let expected = ndarray::array![
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        ];
        assert!(max_abs_diff(state.matrix(), &expected) < 1e-14);

        // And outcome 0 on the mirrored draw.
        let g = ndarray::array![
            [C64::new(0.5, 0.0), C64::new(0.5, 0.0)],
            [C64::new(0.5, 0.0), C64::new(0.5, 0.0)],
        ];
        let mut state = CorrelationMatrix::from_matrix(spec, g);
        let ev = measure_site_with_uniform(&mut state, 0, 0.75).unwrap();
        assert!(!ev.outcome);
        let expected = ndarray::array![
            [C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        ];
        assert!(max_abs_diff(state.matrix(), &expected) < 1e-14);
    }

    #[test]
    fn measurement_preserves_invariants() {
        let spec = LatticeSpec::square(6).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..200 {
            prop.evolve(&mut state, 0.05);
            let site = rng.random_range(0..spec.sites());
            measure_site(&mut state, site, &mut rng).unwrap();
            if k % 50 == 0 {
                assert!(state.purity_defect() < 1e-10);
                assert!(state.filling_defect() < 1e-9);
                assert!(state.hermiticity_defect() < 1e-11);
            }
        }
    }

    #[test]
    fn purity_stays_tight_after_thousand_events() {
        let spec = LatticeSpec::square(8).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let params = TrajectoryParams {
            gamma: 2.0,
            horizon: 1000.0 / (2.0 * spec.sites() as f64),
            mode: StepMode::EventDriven,
        };
        let mut rng = TrajectoryRng::new(99, 0);
        let events = run_trajectory(&mut state, &prop, &params, &mut rng).unwrap();
        assert!(events > 600, "expected O(1000) events, got {events}");
        assert!(state.purity_defect() < 1e-9);
    }

    #[test]
    fn batched_engine_matches_sequential_rank1() {
        // One batched step's worth of collapses via the pending-panel engine
        // must agree with immediate rank-1 updates given identical outcomes.
        let spec = LatticeSpec::square(4).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let mut reference = CorrelationMatrix::init_checkerboard(spec).unwrap();
        prop.evolve(&mut reference, 0.8);
        let mut engine_state = reference.clone();

        let n = spec.sites();
        let mut engine = CollapseEngine::new(n);
        engine.sync_diag(engine_state.matrix());
        let uniforms: Vec<f64> =
            (0..n).map(|i| (0.37 + 0.61 * i as f64).fract()).collect();
        for (site, &u) in uniforms.iter().enumerate() {
            let (o_ref, p_ref) = {
                let ev = measure_site_with_uniform(&mut reference, site, u).unwrap();
                (ev.outcome, ev.probability)
            };
            let (o_eng, p_eng) = engine.measure(engine_state.matrix_mut(), site, u).unwrap();
            assert_eq!(o_ref, o_eng);
            assert_abs_diff_eq!(p_ref, p_eng, epsilon = 1e-12);
        }
        engine.flush(engine_state.matrix_mut());
        assert!(max_abs_diff(engine_state.matrix(), reference.matrix()) < 1e-12);
    }

    #[test]
    fn trajectory_event_count_poisson() {
        let spec = LatticeSpec::square(4).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let params =
            TrajectoryParams { gamma: 2.93, horizon: 8.0, mode: StepMode::EventDriven };
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let mut rng = TrajectoryRng::new(4242, 0);
        let events = run_trajectory(&mut state, &prop, &params, &mut rng).unwrap();
        let mean: f64 = 2.93 * 16.0 * 8.0;
        let sigma = mean.sqrt();
        assert!(
            (events as f64 - mean).abs() < 3.0 * sigma,
            "events = {events}, expected {mean} +- {sigma}"
        );
    }

    #[test]
    fn trajectory_deterministic_given_seed() {
        let spec = LatticeSpec::square(4).unwrap();
        let prop = Propagator::new(spec, 1.0);
        for mode in [StepMode::EventDriven, StepMode::Batched { dt: 0.1 }] {
            let params = TrajectoryParams { gamma: 1.5, horizon: 3.0, mode };
            let mut s1 = CorrelationMatrix::init_checkerboard(spec).unwrap();
            let mut s2 = CorrelationMatrix::init_checkerboard(spec).unwrap();
            let e1 =
                run_trajectory(&mut s1, &prop, &params, &mut TrajectoryRng::new(7, 3)).unwrap();
            let e2 =
                run_trajectory(&mut s2, &prop, &params, &mut TrajectoryRng::new(7, 3)).unwrap();
            assert_eq!(e1, e2);
            assert_eq!(s1.matrix(), s2.matrix(), "bit-identical final state");
        }
    }

    #[test]
    fn gamma_zero_keeps_translation_invariance() {
        let spec = LatticeSpec::square(6).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let params =
            TrajectoryParams { gamma: 0.0, horizon: 5.0, mode: StepMode::EventDriven };
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let events =
            run_trajectory(&mut state, &prop, &params, &mut TrajectoryRng::new(1, 0)).unwrap();
        assert_eq!(events, 0);
        // |G_{x,x+d}|^2 must agree for all x related by even translations.
        let d = (2i64, 1i64);
        let reference = {
            let xp = spec.translate(0, d.0, d.1);
            state.entry(0, xp).norm_sqr()
        };
        for x in 0..spec.sites() {
            let (cx, cy) = spec.coords(x);
            if cx % 2 == 0 && cy % 2 == 0 {
                let xp = spec.translate(x, d.0, d.1);
                assert_abs_diff_eq!(state.entry(x, xp).norm_sqr(), reference, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn batched_mode_invariants_hold() {
        let spec = LatticeSpec::square(6).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let params =
            TrajectoryParams { gamma: 1.5, horizon: 4.0, mode: StepMode::Batched { dt: 0.1 } };
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let events =
            run_trajectory(&mut state, &prop, &params, &mut TrajectoryRng::new(3, 1)).unwrap();
        assert!(events > 0);
        assert!(state.purity_defect() < 1e-9);
        assert!(state.filling_defect() < 1e-9);
        assert!(state.hermiticity_defect() < 1e-10);
    }

    #[test]
    fn event_log_records_every_measurement() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        let spec = LatticeSpec::square(4).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let params =
            TrajectoryParams { gamma: 2.0, horizon: 2.0, mode: StepMode::EventDriven };
        let mut state = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let mut rng = TrajectoryRng::new(8, 0);
        let mut logger = EventLogger::create(&path).unwrap();
        let mut observer = |_s: &CorrelationMatrix, e: &MeasurementEvent| {
            logger.record(e).map_err(|err| {
                DynamicsError::InvalidParams(format!("event log: {err}"))
            })
        };
        let events =
            run_trajectory_observed(&mut state, &prop, &params, &mut rng, Some(&mut observer))
                .unwrap();
        logger.finish().unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("time,site,outcome,p"));
        assert_eq!(lines.count() as u64, events);
    }

    #[test]
    fn born_frequencies_match_occupation() {
        // Repeated measurement of a held-fixed state: outcome-1 frequency
        // approaches G_xx.
        let spec = LatticeSpec::rect(2, 1).unwrap();
        let g = ndarray::array![
            [C64::new(0.3, 0.0), C64::new(0.1, 0.2)],
            [C64::new(0.1, -0.2), C64::new(0.7, 0.0)],
        ];
        let frozen = CorrelationMatrix::from_matrix(spec, g);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let trials = 40_000;
        let mut ones = 0u32;
        for _ in 0..trials {
            let mut copy = frozen.clone();
            if measure_site(&mut copy, 0, &mut rng).unwrap().outcome {
                ones += 1;
            }
        }
        let freq = ones as f64 / trials as f64;
        let sigma = (0.3 * 0.7 / trials as f64).sqrt();
        assert!((freq - 0.3).abs() < 3.0 * sigma, "freq = {freq}");
    }
}
