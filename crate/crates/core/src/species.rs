//! Atomic species records and the single-atom energy scales derived from them.
//!
//! Everything is SI; linewidths and detunings are angular frequencies (rad/s).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{AMU, C, H, HBAR, KB};
use crate::error::{positive, Error, Result};

/// Atomic constants of the principal trapping/cooling line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies {
    pub name: String,
    /// kg
    pub mass: f64,
    /// m
    pub transition_wavelength: f64,
    /// Γ in rad/s
    pub natural_linewidth: f64,
    /// W/m²
    pub saturation_intensity: f64,
}

impl AtomSpecies {
    pub fn new(
        name: impl Into<String>,
        mass: f64,
        transition_wavelength: f64,
        natural_linewidth: f64,
        saturation_intensity: f64,
    ) -> Result<Self> {
        let species = AtomSpecies {
            name: name.into(),
            mass,
            transition_wavelength,
            natural_linewidth,
            saturation_intensity,
        };
        species.validate()?;
        Ok(species)
    }

    /// Rubidium-85 on the D2 line with Γ/2π = 5.89 MHz (τ = 27 ns).
    ///
    /// The saturation intensity is the two-level value πhcΓ/(3λ³), which keeps
    /// the dipole-potential and scattering-rate prefactors self-consistent.
    pub fn rb85() -> Self {
        let wavelength = 780.241_209_686e-9;
        let linewidth = 2.0 * PI * 5.89e6;
        AtomSpecies {
            name: "Rb85".to_string(),
            mass: 84.911_789_738 * AMU,
            transition_wavelength: wavelength,
            natural_linewidth: linewidth,
            saturation_intensity: two_level_saturation_intensity(wavelength, linewidth),
        }
    }

    /// Looks up a built-in record by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "Rb85" | "rb85" | "85Rb" => Some(Self::rb85()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("mass", self.mass)?;
        positive("transition_wavelength", self.transition_wavelength)?;
        positive("natural_linewidth", self.natural_linewidth)?;
        positive("saturation_intensity", self.saturation_intensity)?;
        Ok(())
    }

    /// Angular frequency ω₀ of the transition.
    pub fn transition_angular_frequency(&self) -> f64 {
        2.0 * PI * C / self.transition_wavelength
    }

    /// Doppler cooling limit ħΓ/(2k_B), in kelvin.
    pub fn doppler_temperature(&self) -> f64 {
        HBAR * self.natural_linewidth / (2.0 * KB)
    }

    /// Single-photon recoil energy ħ²k²/(2m) on the transition line.
    pub fn recoil_energy(&self) -> f64 {
        let k = 2.0 * PI / self.transition_wavelength;
        HBAR * HBAR * k * k / (2.0 * self.mass)
    }

    /// Converts a wavelength offset of the laser from the transition into an
    /// angular detuning δ = −2πc·Δλ/λ₀². A positive offset (longer wavelength)
    /// is red, i.e. negative δ.
    pub fn detuning_from_wavelength_offset(&self, delta_lambda: f64) -> Result<f64> {
        if !delta_lambda.is_finite() || delta_lambda.abs() >= self.transition_wavelength / 10.0 {
            return Err(Error::invalid(
                "delta_lambda",
                delta_lambda,
                "wavelength offset must be below a tenth of the transition wavelength",
            ));
        }
        let l0 = self.transition_wavelength;
        Ok(-2.0 * PI * C * delta_lambda / (l0 * l0))
    }

    /// Laser wavelength 2πc/(ω₀ + δ) for an angular detuning δ.
    pub fn wavelength_for_detuning(&self, detuning: f64) -> f64 {
        2.0 * PI * C / (self.transition_angular_frequency() + detuning)
    }
}

/// Two-level saturation intensity πhcΓ/(3λ³).
pub fn two_level_saturation_intensity(wavelength: f64, linewidth: f64) -> f64 {
    PI * H * C * linewidth / (3.0 * wavelength.powi(3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn rb85_doppler_limit() {
        let t = AtomSpecies::rb85().doppler_temperature();
        assert!(rel(t, 0.141e-3) < 5e-3, "{t}");
    }

    #[test]
    fn doppler_limit_with_wider_linewidth() {
        let mut rb = AtomSpecies::rb85();
        rb.natural_linewidth = 2.0 * PI * 6.07e6;
        assert!(rel(rb.doppler_temperature(), 0.146e-3) < 5e-3);
    }

    #[test]
    fn doppler_doubles_with_linewidth() {
        let rb = AtomSpecies::rb85();
        let mut wide = rb.clone();
        wide.natural_linewidth *= 2.0;
        assert!(rel(wide.doppler_temperature(), 2.0 * rb.doppler_temperature()) < 1e-15);
    }

    #[test]
    fn rb85_recoil() {
        let e = AtomSpecies::rb85().recoil_energy() / KB;
        assert!(rel(e, 0.186e-6) < 1e-2, "{e}");
    }

    #[test]
    fn recoil_scaling() {
        let rb = AtomSpecies::rb85();
        let e = rb.recoil_energy();
        let mut heavy = rb.clone();
        heavy.mass *= 2.0;
        assert!(rel(heavy.recoil_energy(), e / 2.0) < 1e-14);
        let mut long = rb.clone();
        long.transition_wavelength *= 2.0;
        assert!(rel(long.recoil_energy(), e / 4.0) < 1e-14);
    }

    #[test]
    fn two_nm_red_offset() {
        let rb = AtomSpecies::rb85();
        let d = rb.detuning_from_wavelength_offset(2e-9).unwrap();
        assert!(rel(d / (2.0 * PI), -0.99e12) < 1e-2, "{d}");
        assert_eq!(rb.detuning_from_wavelength_offset(0.0).unwrap(), 0.0);
        assert_eq!(rb.detuning_from_wavelength_offset(-2e-9).unwrap(), -d);
    }

    #[test]
    fn large_offset_rejected() {
        let rb = AtomSpecies::rb85();
        assert!(rb.detuning_from_wavelength_offset(78.1e-9).is_err());
        assert!(rb.detuning_from_wavelength_offset(-80e-9).is_err());
        assert!(rb.detuning_from_wavelength_offset(f64::NAN).is_err());
    }

    #[test]
    fn invalid_records_rejected() {
        assert!(AtomSpecies::new("x", 0.0, 780e-9, 1e7, 16.0).is_err());
        assert!(AtomSpecies::new("x", 1e-25, -1.0, 1e7, 16.0).is_err());
        assert!(AtomSpecies::new("x", 1e-25, 780e-9, 0.0, 16.0).is_err());
        assert!(AtomSpecies::new("x", 1e-25, 780e-9, 1e7, f64::NAN).is_err());
        assert!(AtomSpecies::builtin("Rb85").unwrap().validate().is_ok());
        assert!(AtomSpecies::builtin("Cs133").is_none());
    }

    #[test]
    fn detuning_wavelength_inverse() {
        let rb = AtomSpecies::rb85();
        let d = rb.detuning_from_wavelength_offset(2e-9).unwrap();
        let l = rb.wavelength_for_detuning(d);
        // first-order conversion, so agreement is to O(Δλ/λ)
        assert!((l - rb.transition_wavelength - 2e-9).abs() < 1e-11);
    }

    proptest! {
        #[test]
        fn doppler_linear_in_linewidth(scale in 0.01f64..100.0) {
            let rb = AtomSpecies::rb85();
            let mut s = rb.clone();
            s.natural_linewidth *= scale;
            prop_assert!(rel(s.doppler_temperature(), scale * rb.doppler_temperature()) < 1e-14);
        }

        #[test]
        fn recoil_inverse_mass_and_wavelength_squared(m in 1e-27f64..1e-24, l in 300e-9f64..2e-6) {
            let s = AtomSpecies::new("x", m, l, 1e7, 10.0).unwrap();
            let reference = HBAR * HBAR * (2.0 * PI).powi(2) / 2.0;
            prop_assert!(rel(s.recoil_energy() * m * l * l, reference) < 1e-12);
        }

        #[test]
        fn detuning_conversion_is_odd(x in -70e-9f64..70e-9) {
            let rb = AtomSpecies::rb85();
            let a = rb.detuning_from_wavelength_offset(x).unwrap();
            let b = rb.detuning_from_wavelength_offset(-x).unwrap();
            prop_assert_eq!(a, -b);
        }
    }
}
