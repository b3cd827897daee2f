//! Non-equilibrium steady states and electric conductivity of
//! non-interacting lattice fermions under dissipative (Davies) dynamics.
//!
//! The library builds the one-particle operators of a tight-binding model
//! on a truncated box, computes the driven steady-state covariance in
//! closed form, evaluates the exact dissipative Kubo conductivity as a
//! resolvent sum, and cross-validates everything against closed-form
//! solvable models and Bloch band theory for periodic potentials.

extern crate openblas_src;

pub mod error;
pub mod lattice;
pub mod operator;
pub mod spectral;
pub mod quad;
pub mod oracles;
pub mod ness;
pub mod kubo;
pub mod bloch;
pub mod config;
pub mod run;

pub use error::{Error, Result};
pub use operator::HermitianOperator;
pub use spectral::{Beta, SpectralDecomposition, ThermoParams};
