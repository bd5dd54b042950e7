//! Pseudo-spectral solver for time-dependent mean field games on `𝕋ⁿ` with
//! non-separable Hamiltonians.
//!
//! The unknowns are the mean-zero parts `w = ℙu`, `μ = m - m̄` on a truncated
//! Fourier basis. [`fixed_point`] iterates the Duhamel map to a solution for
//! small data, [`continuation`] traces the weak-coupling branch `εℋ` for large
//! data, and [`verification`] checks the results against the PDEs and an
//! independent time stepper.

pub mod continuation;
pub mod error;
pub mod fixed_point;
pub mod fourier;
pub mod hamiltonian;
pub mod heat;
pub mod verification;

pub use error::{Error, Result};
