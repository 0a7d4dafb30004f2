//! Finite-statistics quantum state tomography: simulation and spectral analysis
//! of linear density-matrix estimates.
//!
//! The crate is organised bottom-up:
//!
//! - [`pauli`]: Pauli strings, measurement settings and outcomes, ground-truth
//!   states and exact outcome probabilities.
//! - [`sampling`]: multinomial / Poissonian count generation with per-stream
//!   deterministic seeding.
//! - [`estimation`]: correlation tensors, linear inversion for the overcomplete
//!   Pauli scheme and the complete four-projector scheme, Hermitian spectra.
//! - [`spectral`]: closed-form spectral laws (Wigner semicircle, single-qubit
//!   density, Laplace law), minimum count thresholds and Catalan moments.
//! - [`hypothesis`]: Anderson-Darling testing of spectra and rank estimation.
//! - [`ensemble`]: the parallel Monte-Carlo driver and the on-disk ensemble
//!   format.

pub mod ensemble;
pub mod estimation;
pub mod hypothesis;
pub mod pauli;
pub mod quadrature;
pub mod sampling;
pub mod spectral;

pub use num_complex::Complex64;
