//! Exact master-equation machinery for two harmonic oscillators coupled to a
//! common harmonic bath: bath kernels, time-dependent coefficients,
//! Gaussian-state evolution, superposition decoherence, entanglement and
//! uncertainty diagnostics, and an exact finite-bath reference.

pub mod error;
pub mod grid;
pub mod quad;

pub mod kernels;

pub mod elementary;

pub mod coefficients;

pub mod dynamics;

pub mod gauss;

pub mod propagator;

pub mod analysis;

pub mod oracle;

pub use nalgebra;

pub use error::{Error, Result};
pub use grid::UniformGrid;
pub use kernels::{
    tabulate_kernels, BathMode, KernelTable, PhysConsts, SpectralDensity, SpectralKind,
    CM_COUPLING_FACTOR,
};
