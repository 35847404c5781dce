//! Ground states of a one-dimensional array of QED cavities coupled by photon
//! hopping and by an N-type four-level atom.
//!
//! The crate provides the model ([`model`]), an exact-diagonalization oracle
//! ([`ed`]), a charge-conserving two-site DMRG ([`dmrg`]), the gap and
//! density-wave diagnostics built on top of it ([`observables`]) and the
//! finite-size extrapolation used to place phase boundaries ([`scaling`]).

pub mod dmrg;
pub mod ed;
pub mod error;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod scaling;
pub mod sparse;

pub use error::{Error, Result};

/// Formats a float with 15 significant digits in scientific notation.
pub fn format_sig(x: f64) -> String {
    format!("{x:.14e}")
}
