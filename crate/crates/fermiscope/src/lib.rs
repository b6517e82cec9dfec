//! Quantum-trajectory simulation of monitored free fermions on a 2D lattice.
//!
//! A pure Gaussian (Slater-determinant) state is tracked through its two-point
//! correlation matrix while it undergoes unitary tight-binding evolution
//! interleaved with stochastic projective measurements of site occupancies.
//! On top of the trajectory engine sit ensemble campaigns over (γ, L) grids
//! and the statistical machinery used to characterize the diffusive, critical,
//! and localized regimes: particle-number covariance and density-correlation
//! distributions, bootstrap error bars, finite-size scaling fits, and
//! multifractal exponent extraction.

pub mod analysis;
pub mod campaigns;
pub mod dynamics;
pub mod ensemble;
pub mod gaussian;
pub mod lattice;
pub mod linalg;
pub mod observables;
pub mod oracle;
pub mod stats;

pub use dynamics::{Propagator, StepMode, TrajectoryParams};
pub use ensemble::{ExperimentConfig, SampleRecord, SampleSet};
pub use gaussian::CorrelationMatrix;
pub use lattice::{Axis, LatticeSpec, PointPair, Region};
pub use observables::ObservableKind;
