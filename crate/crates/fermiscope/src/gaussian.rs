//! Pure Gaussian many-body state represented by its two-point correlation
//! matrix, with initialization, integrity diagnostics, and checkpoint IO.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{LatticeSpec, Region};
use crate::linalg;

#[derive(Debug, Error)]
pub enum GaussianError {
    #[error("checkerboard initialization requires an even site count, got {0}")]
    OddFilling(usize),
    #[error("state corrupted: occupation at site {site} is {value} (imag {imag})")]
    CorruptedOccupation { site: usize, value: f64, imag: f64 },
    #[error("state corrupted: sub-block eigenvalue {0} outside [0, 1]")]
    CorruptedSpectrum(f64),
    #[error("checkpoint IO: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint payload has {found} bytes, expected {expected}")]
    Truncated { expected: usize, found: usize },
}

/// Checkpoint sidecar data, stored as a single JSON line ahead of the raw
/// little-endian complex matrix.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckpointMeta {
    pub lx: usize,
    pub ly: usize,
    pub time: f64,
    pub seed: u64,
    pub events: u64,
}

/// Two-point correlation matrix G[x, x'] = <psi^dag_x psi_x'> of a pure
/// Gaussian state at half filling. For a pure state G is a Hermitian
/// projector with Tr G = N/2.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    spec: LatticeSpec,
    g: Array2<C64>,
}

impl CorrelationMatrix {
    /// Product state occupying sites with even coordinate sum. Trivially pure
    /// and half filled; the steady-state ensemble does not depend on this
    /// choice.
    pub fn init_checkerboard(spec: LatticeSpec) -> Result<Self, GaussianError> {
        let n = spec.sites();
        if !n.is_multiple_of(2) {
            return Err(GaussianError::OddFilling(n));
        }
        let mut g = Array2::<C64>::zeros((n, n));
        let mut filled = 0usize;
        for idx in 0..n {
            let (x, y) = spec.coords(idx);
            if (x + y).is_multiple_of(2) {
                g[(idx, idx)] = C64::new(1.0, 0.0);
                filled += 1;
            }
        }
        debug_assert_eq!(filled, n / 2);
        Ok(Self { spec, g })
    }

    /// Single particle localized at `site`; not half filled, test geometry
    /// for propagator checks.
    pub fn single_particle(spec: LatticeSpec, site: usize) -> Self {
        let n = spec.sites();
        let mut g = Array2::<C64>::zeros((n, n));
        g[(site, site)] = C64::new(1.0, 0.0);
        Self { spec, g }
    }

    /// Wrap an explicit matrix. Caller is responsible for its invariants.
    pub fn from_matrix(spec: LatticeSpec, g: Array2<C64>) -> Self {
        assert_eq!(g.nrows(), spec.sites());
        assert_eq!(g.ncols(), spec.sites());
        Self { spec, g }
    }

    /// Correlation matrix G[a, b] = <c^dag_a c_b> of the Slater determinant
    /// with column-orthonormal orbitals W: G = conj(W) W^T.
    pub fn from_orbitals(spec: LatticeSpec, w: &Array2<C64>) -> Self {
        let n = spec.sites();
        assert_eq!(w.nrows(), n);
        let mut g = Array2::<C64>::zeros((n, n));
        for a in 0..n {
            for b in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for m in 0..w.ncols() {
                    acc += w[(a, m)].conj() * w[(b, m)];
                }
                g[(a, b)] = acc;
            }
        }
        Self { spec, g }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn sites(&self) -> usize {
        self.spec.sites()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.g
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<C64> {
        &mut self.g
    }

    pub fn entry(&self, a: usize, b: usize) -> C64 {
        self.g[(a, b)]
    }

    pub fn trace(&self) -> C64 {
        (0..self.sites()).map(|i| self.g[(i, i)]).sum()
    }

    /// |Tr G - N/2|, the half-filling defect.
    pub fn filling_defect(&self) -> f64 {
        (self.trace() - C64::new(self.sites() as f64 / 2.0, 0.0)).norm()
    }

    /// max |G - G^dagger|.
    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.g)
    }

    /// max |G^2 - G|; zero for a pure Gaussian state.
    pub fn purity_defect(&self) -> f64 {
        let n = self.sites();
        let gg = self.g.dot(&self.g);
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let d = (gg[(a, b)] - self.g[(a, b)]).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Local occupancy <n_x>, clamped to [0, 1] against roundoff.
    pub fn occupation(&self, site: usize) -> Result<f64, GaussianError> {
        let z = self.g[(site, site)];
        if z.im.abs() > 1e-10 || z.re < -1e-8 || z.re > 1.0 + 1e-8 {
            return Err(GaussianError::CorruptedOccupation {
                site,
                value: z.re,
                imag: z.im,
            });
        }
        Ok(z.re.clamp(0.0, 1.0))
    }

    /// G <- (G + G^dagger) / 2, suppressing roundoff drift.
    pub fn resymmetrize(&mut self) {
        let n = self.sites();
        for a in 0..n {
            self.g[(a, a)] = C64::new(self.g[(a, a)].re, 0.0);
            for b in (a + 1)..n {
                let avg = 0.5 * (self.g[(a, b)] + self.g[(b, a)].conj());
                self.g[(a, b)] = avg;
                self.g[(b, a)] = avg.conj();
            }
        }
    }

    /// Dense copy of the sub-block G[A, A].
    pub fn sub_block(&self, region: &Region) -> Array2<C64> {
        let sites = region.sites();
        let mut block = Array2::<C64>::zeros((sites.len(), sites.len()));
        for (i, &a) in sites.iter().enumerate() {
            for (j, &b) in sites.iter().enumerate() {
                block[(i, j)] = self.g[(a, b)];
            }
        }
        block
    }

    /// Raw little-endian checkpoint with a one-line JSON header.
    pub fn write_checkpoint(&self, path: &Path, meta: &CheckpointMeta) -> Result<(), GaussianError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut file, meta)?;
        file.write_all(b"\n")?;
        for z in self.g.iter() {
            file.write_all(&z.re.to_le_bytes())?;
            file.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<(Self, CheckpointMeta), GaussianError> {
        let mut reader = BufReader::new(std::fs::File::open(path)?);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let meta: CheckpointMeta = serde_json::from_str(header.trim())?;
        let spec = LatticeSpec { lx: meta.lx, ly: meta.ly };
        let n = spec.sites();
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        let expected = n * n * 16;
        if bytes.len() != expected {
            return Err(GaussianError::Truncated { expected, found: bytes.len() });
        }
        let mut g = Array2::<C64>::zeros((n, n));
        for (k, chunk) in bytes.chunks_exact(16).enumerate() {
            let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
            let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
            g[(k / n, k % n)] = C64::new(re, im);
        }
        Ok((Self { spec, g }, meta))
    }
}
