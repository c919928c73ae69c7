//! Numerical laboratory for the focusing Gross–Pitaevskii Gibbs measures on the line.
//!
//! Fields live in the span of the first `N + 1` Hermite functions `h_n`, the
//! eigenfunctions of `-d²/dx² + x²` with eigenvalues `λ_n² = 1 + 2n`. On top of
//! that truncated space the crate provides
//!
//! * [`spectral`]: the basis, its quadrature, coefficient/grid transforms and norms;
//! * [`fields`]: the Gaussian reference measure, Wick-renormalized mass and densities;
//! * [`energy`]: the Hamiltonian, its grand-canonical and tamed variants, gradients,
//!   rate functions and the calibration of the chemical potential;
//! * [`soliton`]: mass-constrained ground states, the negative-energy threshold and
//!   distances to the phase orbit of a ground state;
//! * [`mcmc`]: Gaussian-reference Metropolis chains, shell conditioning and
//!   importance-sampling estimators for partition functions and shell probabilities;
//! * [`ldp`]: rate fits, low-temperature experiments and a tensor quadrature oracle;
//! * [`cli`]: configuration, persistence and the command-line entry point.

pub mod cli;
pub mod energy;
pub mod error;
pub mod fields;
pub mod ldp;
pub mod mcmc;
pub mod rng;
pub mod soliton;
pub mod spectral;

pub use error::{Error, Result};
pub use fields::{Field, GibbsParams};
pub use spectral::HermiteBasis;

pub use num_complex::Complex64;
