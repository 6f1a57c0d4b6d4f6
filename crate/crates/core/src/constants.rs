//! Physical constants in SI units (CODATA 2018, exact where defined).

use std::f64::consts::PI;

/// Planck constant (J s)
pub const H: f64 = 6.626_070_15e-34;

/// reduced Planck constant (J s)
pub const HBAR: f64 = H / (2.0 * PI);

/// speed of light in vacuum (m/s)
pub const C: f64 = 299_792_458.0;

/// Boltzmann constant (J/K)
pub const KB: f64 = 1.380_649e-23;

/// unified atomic mass unit (kg)
pub const AMU: f64 = 1.660_539_066_60e-27;
