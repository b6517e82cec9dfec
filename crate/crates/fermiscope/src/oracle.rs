//! Brute-force many-body reference simulator in the fixed-particle-number
//! Fock sector. Ground truth for the Gaussian update rules and observables
//! on small lattices; used by tests and the `oracle-check` command.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;
use thiserror::Error;

use crate::dynamics::{
    hopping_matrix, measure_site_with_uniform, sample_waiting_time, Propagator,
    TrajectoryParams, TrajectoryRng,
};
use crate::gaussian::CorrelationMatrix;
use crate::lattice::LatticeSpec;
use crate::linalg;

/// Largest sector dimension the dense reference simulator accepts.
const MAX_SECTOR_DIM: usize = 20_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("lattice with {0} sites exceeds the {1}-site reference limit")]
    TooManySites(usize, usize),
    #[error("sector dimension {0} exceeds {MAX_SECTOR_DIM}")]
    SectorTooLarge(usize),
    #[error("projection onto a zero-probability branch")]
    ZeroNormProjection,
    #[error("amplitude norm drifted to {0}")]
    NormDrift(f64),
}

/// Ordered basis of occupation bitmasks with fixed particle number.
#[derive(Clone, Debug)]
pub struct FockBasis {
    pub sites: usize,
    pub particles: usize,
    masks: Vec<u64>,
}

impl FockBasis {
    pub fn new(sites: usize, particles: usize) -> Result<Self, OracleError> {
        if sites > 60 {
            return Err(OracleError::TooManySites(sites, 60));
        }
        let dim = binomial(sites, particles);
        if dim > MAX_SECTOR_DIM {
            return Err(OracleError::SectorTooLarge(dim));
        }
        let mut masks = Vec::with_capacity(dim);
        let limit = 1u64 << sites;
        for m in 0..limit {
            if m.count_ones() as usize == particles {
                masks.push(m);
            }
        }
        Ok(Self { sites, particles, masks })
    }

    pub fn dim(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[u64] {
        &self.masks
    }

    fn index_of(&self, mask: u64) -> usize {
        self.masks.binary_search(&mask).expect("mask in sector")
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Jordan-Wigner sign for acting with an operator at `site` on `mask`:
/// parity of the occupied sites below it.
fn jw_sign(mask: u64, site: usize) -> f64 {
    let below = mask & ((1u64 << site) - 1);
    if below.count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Pure many-body state in a fixed-N sector.
#[derive(Clone, Debug)]
pub struct FockState {
    pub basis: FockBasis,
    pub amplitudes: Vec<C64>,
}

impl FockState {
    /// Product state with the given occupation bitmask.
    pub fn product(sites: usize, mask: u64) -> Result<Self, OracleError> {
        let basis = FockBasis::new(sites, mask.count_ones() as usize)?;
        let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dim()];
        amplitudes[basis.index_of(mask)] = C64::new(1.0, 0.0);
        Ok(Self { basis, amplitudes })
    }

    /// Checkerboard product state matching
    /// [`CorrelationMatrix::init_checkerboard`].
    pub fn checkerboard(spec: &LatticeSpec) -> Result<Self, OracleError> {
        let mut mask = 0u64;
        for idx in 0..spec.sites() {
            let (x, y) = spec.coords(idx);
            if (x + y).is_multiple_of(2) {
                mask |= 1 << idx;
            }
        }
        Self::product(spec.sites(), mask)
    }

    /// Slater determinant of column-orthonormal orbitals W (sites x M):
    /// amplitude on each mask is the determinant of the selected rows.
    pub fn from_orbitals(w: &Array2<C64>) -> Result<Self, OracleError> {
        let sites = w.nrows();
        let particles = w.ncols();
        let basis = FockBasis::new(sites, particles)?;
        let mut amplitudes = Vec::with_capacity(basis.dim());
        for &mask in basis.masks() {
            let rows: Vec<usize> =
                (0..sites).filter(|&s| mask & (1 << s) != 0).collect();
            let mut minor = Array2::<C64>::zeros((particles, particles));
            for (i, &r) in rows.iter().enumerate() {
                for c in 0..particles {
                    minor[(i, c)] = w[(r, c)];
                }
            }
            amplitudes.push(determinant(&mut minor));
        }
        Ok(Self { basis, amplitudes })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Born probability of finding site `x` occupied.
    pub fn occupation_probability(&self, x: usize) -> f64 {
        let bit = 1u64 << x;
        self.basis
            .masks()
            .iter()
            .zip(&self.amplitudes)
            .filter(|(&m, _)| m & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// <n_x n_x'>.
    pub fn density_pair(&self, x: usize, xp: usize) -> f64 {
        let bits = (1u64 << x) | (1u64 << xp);
        self.basis
            .masks()
            .iter()
            .zip(&self.amplitudes)
            .filter(|(&m, _)| m & bits == bits)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Exact correlation matrix <c^dag_a c_b> of the many-body state.
    pub fn correlation_matrix(&self) -> Array2<C64> {
        let n = self.basis.sites;
        let mut g = Array2::<C64>::zeros((n, n));
        for (i, (&mask, amp)) in
            self.basis.masks().iter().zip(&self.amplitudes).enumerate()
        {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let _ = i;
            for b in 0..n {
                if mask & (1 << b) == 0 {
                    continue;
                }
                let sign_b = jw_sign(mask, b);
                let removed = mask & !(1 << b);
                for a in 0..n {
                    if a == b {
                        g[(a, a)] += C64::new(amp.norm_sqr(), 0.0);
                        continue;
                    }
                    if removed & (1 << a) != 0 {
                        continue;
                    }
                    let sign_a = jw_sign(removed, a);
                    let target = removed | (1 << a);
                    let j = self.basis.index_of(target);
                    g[(a, b)] +=
                        self.amplitudes[j].conj() * *amp * (sign_a * sign_b);
                }
            }
        }
        g
    }

    /// Von Neumann entropy (nats) of the leading `prefix_sites` sites from
    /// the exact reduced density matrix. Valid for prefix regions, where the
    /// fermionic ordering factorizes without extra signs.
    pub fn reduced_entropy_prefix(&self, prefix_sites: usize) -> f64 {
        let cut = 1u64 << prefix_sites;
        let dim_a = cut as usize;
        let mut rho = Array2::<C64>::zeros((dim_a, dim_a));
        // Group amplitudes by the B-part of the mask.
        for (i, (&mi, ai)) in self.basis.masks().iter().zip(&self.amplitudes).enumerate() {
            let (ai_a, ai_b) = (mi % cut, mi / cut);
            for (&mj, aj) in
                self.basis.masks().iter().zip(&self.amplitudes).skip(i)
            {
                let (aj_a, aj_b) = (mj % cut, mj / cut);
                if ai_b != aj_b {
                    continue;
                }
                let term = *ai * aj.conj();
                rho[(ai_a as usize, aj_a as usize)] += term;
                if mi != mj {
                    rho[(aj_a as usize, ai_a as usize)] += term.conj();
                }
            }
        }
        let mut entropy = 0.0;
        for lambda in linalg::eigvalsh(&rho) {
            if lambda > 1e-14 {
                entropy -= lambda * lambda.ln();
            }
        }
        entropy
    }
}

fn determinant(m: &mut Array2<C64>) -> C64 {
    let n = m.nrows();
    let mut det = C64::new(1.0, 0.0);
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if m[(row, col)].norm() > m[(pivot, col)].norm() {
                pivot = row;
            }
        }
        if m[(pivot, col)].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if pivot != col {
            for k in 0..n {
                let tmp = m[(col, k)];
                m[(col, k)] = m[(pivot, k)];
                m[(pivot, k)] = tmp;
            }
            det = -det;
        }
        det *= m[(col, col)];
        for row in (col + 1)..n {
            let f = m[(row, col)] / m[(col, col)];
            for k in col..n {
                let sub = f * m[(col, k)];
                m[(row, k)] -= sub;
            }
        }
    }
    det
}

/// Sector Hamiltonian with a cached eigendecomposition, so repeated
/// evolutions cost two dense mat-vecs each.
pub struct SectorHamiltonian {
    eigvals: Vec<f64>,
    eigvecs: Array2<C64>,
}

impl SectorHamiltonian {
    /// Build sum_{ab} h[a,b] c^dag_a c_b restricted to the sector of `basis`.
    pub fn new(h: &Array2<C64>, basis: &FockBasis) -> Result<Self, OracleError> {
        let dim = basis.dim();
        let n = basis.sites;
        let mut hm = Array2::<C64>::zeros((dim, dim));
        for (col, &mask) in basis.masks().iter().enumerate() {
            for b in 0..n {
                if mask & (1 << b) == 0 {
                    continue;
                }
                for a in 0..n {
                    if h[(a, b)] == C64::new(0.0, 0.0) {
                        continue;
                    }
                    if a == b {
                        hm[(col, col)] += h[(a, a)];
                        continue;
                    }
                    let removed = mask & !(1 << b);
                    if removed & (1 << a) != 0 {
                        continue;
                    }
                    let sign = jw_sign(mask, b) * jw_sign(removed, a);
                    let target = removed | (1 << a);
                    let row = basis.index_of(target);
                    hm[(row, col)] += h[(a, b)] * sign;
                }
            }
        }
        let (eigvals, eigvecs) = linalg::eigh(&hm);
        Ok(Self { eigvals, eigvecs })
    }

    /// state <- exp(-i H t) state: Schroedinger propagation, matching the
    /// correlation-matrix convention G <- U G U^dag with U = exp(+i h t)
    /// for the real hopping matrix used here.
    pub fn evolve(&self, state: &mut FockState, t: f64) -> Result<(), OracleError> {
        let dim = state.amplitudes.len();
        let mut modal = Vec::with_capacity(dim);
        for k in 0..dim {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..dim {
                acc += self.eigvecs[(j, k)].conj() * state.amplitudes[j];
            }
            modal.push(acc * C64::from_polar(1.0, -self.eigvals[k] * t));
        }
        for j in 0..dim {
            let mut acc = C64::new(0.0, 0.0);
            for (k, m) in modal.iter().enumerate() {
                acc += self.eigvecs[(j, k)] * m;
            }
            state.amplitudes[j] = acc;
        }
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(OracleError::NormDrift(norm));
        }
        Ok(())
    }
}

/// One-shot evolution helper; diagonalizes, evolves, discards.
pub fn oracle_evolve(
    state: &mut FockState,
    h: &Array2<C64>,
    t: f64,
) -> Result<(), OracleError> {
    if state.basis.sites > 16 {
        return Err(OracleError::TooManySites(state.basis.sites, 16));
    }
    SectorHamiltonian::new(h, &state.basis)?.evolve(state, t)
}

/// Projectively measure n_x with an injected uniform draw: outcome 1 iff
/// `forced_uniform` falls below the occupied weight (with the same endpoint
/// forcing as the Gaussian simulator). Projects and renormalizes in place.
pub fn oracle_measure(
    state: &mut FockState,
    x: usize,
    forced_uniform: f64,
) -> Result<(bool, f64), OracleError> {
    let p1 = state.occupation_probability(x);
    let outcome = crate::dynamics::decide_outcome(p1, forced_uniform);
    let bit = 1u64 << x;
    for (&mask, amp) in state.basis.masks().iter().zip(state.amplitudes.iter_mut()) {
        let occupied = mask & bit != 0;
        if occupied != outcome {
            *amp = C64::new(0.0, 0.0);
        }
    }
    let norm = state.norm();
    if norm < 1e-150 {
        return Err(OracleError::ZeroNormProjection);
    }
    let inv = 1.0 / norm;
    for amp in state.amplitudes.iter_mut() {
        *amp *= inv;
    }
    Ok((outcome, p1))
}

/// Outcome of a coupled Gaussian-vs-many-body trajectory comparison.
#[derive(Clone, Debug)]
pub struct CoupledReport {
    pub seeds: u64,
    pub events: u64,
    pub max_deviation: f64,
    pub failure: Option<CoupledFailure>,
}

impl CoupledReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct CoupledFailure {
    pub seed: u64,
    pub event: u64,
    pub time: f64,
    pub site: usize,
    pub deviation: f64,
}

/// Run the Gaussian simulator and the dense many-body reference side by
/// side, feeding identical uniform draws to both, and compare the full
/// correlation matrix after every event (and at the horizon).
pub fn coupled_trajectory_check(
    spec: &LatticeSpec,
    params: &TrajectoryParams,
    base_seed: u64,
    seeds: u64,
    tolerance: f64,
) -> Result<CoupledReport, OracleError> {
    if spec.sites() > 12 {
        return Err(OracleError::TooManySites(spec.sites(), 12));
    }
    params.validate().expect("valid params");
    let n = spec.sites();
    let prop = Propagator::new(*spec, 1.0);
    let h = hopping_matrix(spec, 1.0);
    let basis = FockBasis::new(n, n / 2)?;
    let sector = SectorHamiltonian::new(&h, &basis)?;

    let mut report =
        CoupledReport { seeds, events: 0, max_deviation: 0.0, failure: None };

    'seed_loop: for traj in 0..seeds {
        let mut rng = TrajectoryRng::new(base_seed, traj);
        let mut gauss = CorrelationMatrix::init_checkerboard(*spec)
            .expect("even site count");
        let mut fock = FockState::checkerboard(spec)?;
        let mut t = 0.0f64;
        let mut event_idx = 0u64;
        loop {
            let tau = sample_waiting_time(&mut rng.waits, params.gamma, n);
            let remaining = params.horizon - t;
            if tau >= remaining {
                prop.evolve(&mut gauss, remaining);
                sector.evolve(&mut fock, remaining)?;
                break;
            }
            prop.evolve(&mut gauss, tau);
            sector.evolve(&mut fock, tau)?;
            t += tau;
            let site = rng.sites.random_range(0..n);
            let u: f64 = rng.outcomes.random();
            let gauss_event = measure_site_with_uniform(&mut gauss, site, u)
                .expect("gaussian collapse");
            let (oracle_outcome, oracle_p) = oracle_measure(&mut fock, site, u)?;
            event_idx += 1;
            report.events += 1;

            let outcome_mismatch = gauss_event.outcome != oracle_outcome;
            let prob_gap = (gauss_event.probability - oracle_p).abs();
            let deviation = matrix_deviation(gauss.matrix(), &fock.correlation_matrix());
            report.max_deviation = report.max_deviation.max(deviation);
            if outcome_mismatch || prob_gap > 1e-9 || deviation > tolerance {
                report.failure = Some(CoupledFailure {
                    seed: traj,
                    event: event_idx,
                    time: t,
                    site,
                    deviation: if outcome_mismatch { f64::NAN } else { deviation },
                });
                break 'seed_loop;
            }
        }
        let final_dev = matrix_deviation(gauss.matrix(), &fock.correlation_matrix());
        report.max_deviation = report.max_deviation.max(final_dev);
        if final_dev > tolerance {
            report.failure = Some(CoupledFailure {
                seed: traj,
                event: event_idx,
                time: params.horizon,
                site: usize::MAX,
                deviation: final_dev,
            });
            break;
        }
    }
    Ok(report)
}

fn matrix_deviation(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::StepMode;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Column-orthonormal random orbitals via modified Gram-Schmidt.
    fn random_orbitals(sites: usize, particles: usize, seed: u64) -> Array2<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Array2::<C64>::zeros((sites, particles));
        for c in 0..particles {
            for r in 0..sites {
                w[(r, c)] =
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
            for prev in 0..c {
                let overlap: C64 =
                    (0..sites).map(|r| w[(r, prev)].conj() * w[(r, c)]).sum();
                for r in 0..sites {
                    let sub = overlap * w[(r, prev)];
                    w[(r, c)] -= sub;
                }
            }
            let norm: f64 =
                (0..sites).map(|r| w[(r, c)].norm_sqr()).sum::<f64>().sqrt();
            for r in 0..sites {
                w[(r, c)] /= C64::new(norm, 0.0);
            }
        }
        w
    }

    #[test]
    fn basis_enumeration_counts() {
        let basis = FockBasis::new(6, 3).unwrap();
        assert_eq!(basis.dim(), 20);
        assert!(FockBasis::new(20, 10).is_err());
    }

    #[test]
    fn slater_state_is_normalized_projector() {
        let w = random_orbitals(6, 3, 3);
        let state = FockState::from_orbitals(&w).unwrap();
        assert_abs_diff_eq!(state.norm(), 1.0, epsilon = 1e-12);
        let g = state.correlation_matrix();
        let gg = g.dot(&g);
        let defect = gg
            .iter()
            .zip(g.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(defect < 1e-12, "projector defect {defect}");
    }

    #[test]
    fn orbital_state_matches_gaussian_matrix() {
        let spec = LatticeSpec::rect(3, 2).unwrap();
        let w = random_orbitals(6, 3, 5);
        let state = FockState::from_orbitals(&w).unwrap();
        let direct = CorrelationMatrix::from_orbitals(spec, &w);
        let dev = matrix_deviation(&state.correlation_matrix(), direct.matrix());
        assert!(dev < 1e-12, "deviation {dev}");
    }

    #[test]
    fn wick_identity_for_density_correlations() {
        // |G_{x x'}|^2 = <n_x><n_x'> - <n_x n_x'> for x != x' on a random
        // Slater determinant.
        let w = random_orbitals(6, 3, 11);
        let state = FockState::from_orbitals(&w).unwrap();
        let g = state.correlation_matrix();
        for x in 0..6 {
            for xp in 0..6 {
                if x == xp {
                    continue;
                }
                let lhs = g[(x, xp)].norm_sqr();
                let rhs = g[(x, x)].re * g[(xp, xp)].re - state.density_pair(x, xp);
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn occupation_probability_matches_correlation_diagonal() {
        let w = random_orbitals(6, 3, 17);
        let state = FockState::from_orbitals(&w).unwrap();
        let g = state.correlation_matrix();
        for x in 0..6 {
            assert_abs_diff_eq!(
                state.occupation_probability(x),
                g[(x, x)].re,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn product_state_pair_factorizes() {
        let state = FockState::product(4, 0b0101).unwrap();
        for x in 0..4 {
            for xp in 0..4 {
                if x == xp {
                    continue;
                }
                let nx = state.occupation_probability(x);
                let nxp = state.occupation_probability(xp);
                assert_abs_diff_eq!(state.density_pair(x, xp), nx * nxp, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn evolve_zero_time_is_identity() {
        let spec = LatticeSpec::rect(2, 2).unwrap();
        let mut state = FockState::checkerboard(&spec).unwrap();
        let before = state.amplitudes.clone();
        let h = hopping_matrix(&spec, 1.0);
        oracle_evolve(&mut state, &h, 0.0).unwrap();
        for (a, b) in state.amplitudes.iter().zip(&before) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn single_particle_sector_matches_matrix_exponential() {
        // One particle on a 4-site ring: the sector is isomorphic to the
        // single-particle Hilbert space.
        let spec = LatticeSpec::rect(4, 1).unwrap();
        let h = hopping_matrix(&spec, 1.0);
        let basis = FockBasis::new(4, 1).unwrap();
        let sector = SectorHamiltonian::new(&h, &basis).unwrap();
        let mut state = FockState::product(4, 0b0001).unwrap();
        let t = 0.9;
        sector.evolve(&mut state, t).unwrap();

        let (vals, vecs) = linalg::eigh(&h);
        // psi(t) = V e^{-i E t} V^dag e_0
        let mut expected = [C64::new(0.0, 0.0); 4];
        for a in 0..4 {
            for k in 0..4 {
                expected[a] += vecs[(a, k)]
                    * C64::from_polar(1.0, -vals[k] * t)
                    * vecs[(0, k)].conj();
            }
        }
        // Sector basis for 1 particle: masks 1, 2, 4, 8 map to sites 0..3.
        for site in 0..4 {
            let idx = state.basis.index_of(1 << site);
            assert_abs_diff_eq!(
                (state.amplitudes[idx] - expected[site]).norm(),
                0.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn half_filled_ring_matches_gaussian_evolution() {
        let spec = LatticeSpec::rect(6, 1).unwrap();
        let h = hopping_matrix(&spec, 1.0);
        let mut fock = FockState::checkerboard(&spec).unwrap();
        oracle_evolve(&mut fock, &h, 0.7).unwrap();

        let prop = Propagator::new(spec, 1.0);
        let mut gauss = CorrelationMatrix::init_checkerboard(spec).unwrap();
        prop.evolve(&mut gauss, 0.7);

        let dev = matrix_deviation(&fock.correlation_matrix(), gauss.matrix());
        assert!(dev < 1e-10, "deviation {dev}");
    }

    #[test]
    fn measure_eigenstate_deterministic() {
        let mut state = FockState::product(4, 0b0011).unwrap();
        let before = state.amplitudes.clone();
        let (outcome, p) = oracle_measure(&mut state, 0, 0.999).unwrap();
        assert!(outcome);
        assert_eq!(p, 1.0);
        assert_eq!(state.amplitudes, before);
        let (outcome, p) = oracle_measure(&mut state, 3, 0.0).unwrap();
        assert!(!outcome);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn measure_bell_like_superposition() {
        // (|10> + |01>)/sqrt(2), measure site 0 with outcome 1 -> |01>
        // in bitmask terms: masks 0b01 (site0) and 0b10 (site1).
        let basis = FockBasis::new(2, 1).unwrap();
        let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut state = FockState { basis, amplitudes: vec![amp, amp] };
        let (outcome, p) = oracle_measure(&mut state, 0, 0.3).unwrap();
        assert!(outcome);
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(state.amplitudes[0].norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(state.amplitudes[1].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn measurement_probability_matches_gaussian() {
        let w = random_orbitals(6, 3, 23);
        let fock = FockState::from_orbitals(&w).unwrap();
        let g = fock.correlation_matrix();
        for x in 0..6 {
            let mut copy = fock.clone();
            let (_, p) = oracle_measure(&mut copy, x, 0.5).unwrap();
            assert_abs_diff_eq!(p, g[(x, x)].re, epsilon = 1e-12);
        }
    }

    #[test]
    fn reduced_entropy_matches_gaussian_formula() {
        let spec = LatticeSpec::rect(3, 2).unwrap();
        let w = random_orbitals(6, 3, 29);
        let fock = FockState::from_orbitals(&w).unwrap();
        let gauss = CorrelationMatrix::from_orbitals(spec, &w);
        let region =
            crate::lattice::Region::new(vec![0, 1, 2], "A", &spec).unwrap();
        let s_gauss = crate::observables::region_entropy(&gauss, &region).unwrap();
        let s_exact = fock.reduced_entropy_prefix(3);
        assert_abs_diff_eq!(s_gauss, s_exact, epsilon = 1e-9);
    }

    #[test]
    fn coupled_check_small_lattices() {
        for (lx, ly) in [(2usize, 2usize), (6, 1)] {
            let spec = LatticeSpec::rect(lx, ly).unwrap();
            let params = TrajectoryParams {
                gamma: 1.0,
                horizon: 2.0,
                mode: StepMode::EventDriven,
            };
            let report =
                coupled_trajectory_check(&spec, &params, 7, 5, 1e-8).unwrap();
            assert!(report.passed(), "failure: {:?}", report.failure);
            assert!(report.events > 0);
            assert!(report.max_deviation < 1e-8);
        }
    }

    #[test]
    fn coupled_check_pure_unitary() {
        // gamma = 0: no measurements, the comparison reduces to a pure
        // unitary cross-check.
        let spec = LatticeSpec::rect(2, 3).unwrap();
        let params =
            TrajectoryParams { gamma: 0.0, horizon: 3.0, mode: StepMode::EventDriven };
        let report = coupled_trajectory_check(&spec, &params, 5, 3, 1e-8).unwrap();
        assert!(report.passed());
        assert_eq!(report.events, 0);
        assert!(report.max_deviation < 1e-10);
    }

    #[test]
    fn corrupted_collapse_is_detected() {
        // Flip the sign of the rank-1 collapse term on the Gaussian side and
        // verify it no longer matches the many-body projection.
        let spec = LatticeSpec::rect(2, 2).unwrap();
        let prop = Propagator::new(spec, 1.0);
        let h = hopping_matrix(&spec, 1.0);
        let mut gauss = CorrelationMatrix::init_checkerboard(spec).unwrap();
        let mut fock = FockState::checkerboard(&spec).unwrap();
        prop.evolve(&mut gauss, 0.6);
        oracle_evolve(&mut fock, &h, 0.6).unwrap();

        let n = spec.sites();
        let site = 0;
        let p = gauss.occupation(site).unwrap();
        let g = gauss.matrix_mut();
        let col: Vec<C64> = (0..n).map(|a| g[(a, site)]).collect();
        let row: Vec<C64> = (0..n).map(|b| g[(site, b)]).collect();
        // Wrong sign: += instead of -= for the outcome-1 update.
        for a in 0..n {
            let f = col[a] / p;
            for b in 0..n {
                g[(a, b)] += f * row[b];
            }
        }
        g[(site, site)] += C64::new(1.0, 0.0);
        let (_, _) = oracle_measure(&mut fock, site, 0.0).unwrap();
        let dev = matrix_deviation(gauss.matrix(), &fock.correlation_matrix());
        assert!(dev > 1e-2, "sign flip must be visible, dev = {dev}");
    }
}
