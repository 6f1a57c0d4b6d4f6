//! Design and simulation of optical dipole trap arrays formed by microlens
//! arrays: single-site trap characterization, array construction and lattice
//! movement, qubit addressing and readout, and Monte Carlo loading and loss.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod cli;
pub mod config;
pub mod constants;
pub mod error;
pub mod montecarlo;
pub mod optics;
pub mod quadrature;
pub mod register;
pub mod species;
pub mod trapfield;

pub use error::{Error, Result};
