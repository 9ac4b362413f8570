//! Periodic Kohn-Sham-style electronic-structure solver with two
//! independent discretizations of the same problem:
//!
//! * a global spectral (planewave) solver on a uniform grid, and
//! * a discontinuous Galerkin solver whose basis is built adaptively on
//!   each element from local spectral problems on buffered extended
//!   elements.
//!
//! Both share one SCF driver, one model pseudopotential, and one set of
//! grid/interpolation kernels, so their total energies can be compared
//! directly as an accuracy metric.

pub mod basis;
pub mod config;
pub mod dg;
pub mod error;
pub mod geometry;
pub mod grids;
pub mod hamiltonian;
pub mod reference;
pub mod run;
pub mod runtime;
pub mod scf;

pub use error::{Error, Result};

/// 1 hartree in meV, fixed for report output.
pub const HARTREE_TO_MEV: f64 = 27211.4;

/// Boltzmann constant in hartree per kelvin.
pub const BOLTZMANN_AU_PER_K: f64 = 3.166811563e-6;
