//! Dipole-trap physics of a single focused beam in the far-detuned two-level
//! (rotating-wave) approximation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, KB};
use crate::error::{non_negative, positive, Error, Result};
use crate::optics::Vec3;
use crate::species::AtomSpecies;

/// Minimum |δ|/Γ accepted by the far-detuned formulas.
pub const MIN_DETUNING_OVER_LINEWIDTH: f64 = 100.0;

fn check_far_detuned(species: &AtomSpecies, detuning: f64) -> Result<()> {
    let limit = MIN_DETUNING_OVER_LINEWIDTH * species.natural_linewidth;
    if !detuning.is_finite() || detuning.abs() < limit {
        return Err(Error::OutOfValidity(format!(
            "|detuning| = {:.3e} rad/s is below {MIN_DETUNING_OVER_LINEWIDTH}·Γ = {limit:.3e} rad/s",
            detuning.abs()
        )));
    }
    Ok(())
}

/// U₀ = ħΓ²I / (8δ I_sat). Negative (attractive) for red detuning.
pub fn dipole_depth(species: &AtomSpecies, peak_intensity: f64, detuning: f64) -> Result<f64> {
    non_negative("peak_intensity", peak_intensity)?;
    check_far_detuned(species, detuning)?;
    let g = species.natural_linewidth;
    Ok(HBAR * g * g * peak_intensity / (8.0 * detuning * species.saturation_intensity))
}

/// Γ_sc = Γ³I / (8δ² I_sat).
pub fn scattering_rate(species: &AtomSpecies, peak_intensity: f64, detuning: f64) -> Result<f64> {
    non_negative("peak_intensity", peak_intensity)?;
    check_far_detuned(species, detuning)?;
    let g = species.natural_linewidth;
    Ok(g * g * g * peak_intensity / (8.0 * detuning * detuning * species.saturation_intensity))
}

/// Harmonic frequencies at the bottom of a Gaussian focus:
/// ω_r = √(4|U₀|/m w₀²), ω_z = √(2|U₀|/m z_R²).
pub fn trap_frequencies(species: &AtomSpecies, depth: f64, waist: f64, wavelength: f64) -> Result<(f64, f64)> {
    if !(depth < 0.0) || !depth.is_finite() {
        return Err(Error::invalid("depth", depth, "frequencies need a trapping (negative) depth"));
    }
    positive("waist", waist)?;
    positive("wavelength", wavelength)?;
    let u = depth.abs();
    let m = species.mass;
    let z_r = PI * waist * waist / wavelength;
    let radial = (4.0 * u / (m * waist * waist)).sqrt();
    let axial = (2.0 * u / (m * z_r * z_r)).sqrt();
    Ok((radial, axial))
}

/// rms width √(ħ / 2mω) of the harmonic-oscillator ground state.
pub fn ground_state_extent(species: &AtomSpecies, trap_frequency: f64) -> Result<f64> {
    positive("trap_frequency", trap_frequency)?;
    Ok((HBAR / (2.0 * species.mass * trap_frequency)).sqrt())
}

/// A characterized dipole trap at one focus. The trap beam propagates along +z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapSite {
    pub position: Vec3,
    /// U₀ in J, negative = attractive
    pub depth: f64,
    pub waist: f64,
    /// trapping-light wavelength (m)
    pub wavelength: f64,
    pub radial_frequency: f64,
    pub axial_frequency: f64,
    pub scattering_rate: f64,
    /// rms ground-state radius along the radial direction
    pub ground_state_extent: f64,
    pub lamb_dicke: f64,
    pub source_power: f64,
    pub detuning: f64,
    pub trapped: bool,
    pub sideband_coolable: bool,
}

impl TrapSite {
    pub fn depth_over_kb(&self) -> f64 {
        self.depth / KB
    }

    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist * self.waist / self.wavelength
    }

    /// Full Gaussian-focus potential U₀ (w₀/w(z))² exp(−2r²/w(z)²) at `point`.
    pub fn potential_at(&self, point: &Vec3) -> f64 {
        let d = point - self.position;
        let s = d.z / self.rayleigh_range();
        let w2 = self.waist * self.waist * (1.0 + s * s);
        let r2 = d.x * d.x + d.y * d.y;
        self.depth * (self.waist * self.waist / w2) * (-2.0 * r2 / w2).exp()
    }

    /// Marks the site untrapped if it is shallower than `floor` (J, magnitude).
    pub fn apply_depth_floor(&mut self, floor: f64) {
        if self.depth.abs() < floor {
            self.mark_untrapped();
        }
    }

    fn mark_untrapped(&mut self) {
        self.trapped = false;
        self.sideband_coolable = false;
    }

    pub fn record(&self) -> SiteRecord {
        SiteRecord::from(self)
    }
}

/// Characterizes the trap formed by focusing `site_power` to `site_waist`.
///
/// Non-trapping sites (zero power, blue detuning) come back with
/// `trapped == false` and zeroed motional quantities.
pub fn characterize_site(
    species: &AtomSpecies,
    site_power: f64,
    site_waist: f64,
    detuning: f64,
    position: Vec3,
) -> Result<TrapSite> {
    non_negative("site_power", site_power)?;
    positive("site_waist", site_waist)?;
    let wavelength = species.wavelength_for_detuning(detuning);
    let peak = 2.0 * site_power / (PI * site_waist * site_waist);
    let depth = dipole_depth(species, peak, detuning)?;
    let rate = scattering_rate(species, peak, detuning)?;
    let mut site = TrapSite {
        position,
        depth,
        waist: site_waist,
        wavelength,
        radial_frequency: 0.0,
        axial_frequency: 0.0,
        scattering_rate: rate,
        ground_state_extent: 0.0,
        lamb_dicke: 0.0,
        source_power: site_power,
        detuning,
        trapped: false,
        sideband_coolable: false,
    };
    if depth < 0.0 {
        let (radial, axial) = trap_frequencies(species, depth, site_waist, wavelength)?;
        let extent = ground_state_extent(species, radial)?;
        let lamb_dicke = 2.0 * PI / wavelength * extent;
        site.radial_frequency = radial;
        site.axial_frequency = axial;
        site.ground_state_extent = extent;
        site.lamb_dicke = lamb_dicke;
        site.trapped = true;
        site.sideband_coolable = lamb_dicke < 1.0 && rate < axial / (2.0 * PI);
    }
    Ok(site)
}

/// JSON form of a [`TrapSite`] with SI units spelled out in the keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub position_m: [f64; 3],
    #[serde(rename = "depth_J")]
    pub depth_j: f64,
    #[serde(rename = "depth_over_kB_mK")]
    pub depth_over_kb_mk: f64,
    pub waist_m: f64,
    pub wavelength_m: f64,
    pub radial_frequency_rad_s: f64,
    pub axial_frequency_rad_s: f64,
    pub scattering_rate_per_s: f64,
    pub ground_state_extent_m: f64,
    pub lamb_dicke: f64,
    #[serde(rename = "source_power_W")]
    pub source_power_w: f64,
    pub detuning_rad_s: f64,
    pub trapped: bool,
    pub sideband_coolable: bool,
}

impl From<&TrapSite> for SiteRecord {
    fn from(s: &TrapSite) -> Self {
        SiteRecord {
            position_m: [s.position.x, s.position.y, s.position.z],
            depth_j: s.depth,
            depth_over_kb_mk: s.depth_over_kb() * 1e3,
            waist_m: s.waist,
            wavelength_m: s.wavelength,
            radial_frequency_rad_s: s.radial_frequency,
            axial_frequency_rad_s: s.axial_frequency,
            scattering_rate_per_s: s.scattering_rate,
            ground_state_extent_m: s.ground_state_extent,
            lamb_dicke: s.lamb_dicke,
            source_power_w: s.source_power,
            detuning_rad_s: s.detuning,
            trapped: s.trapped,
            sideband_coolable: s.sideband_coolable,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn rb() -> AtomSpecies {
        AtomSpecies::rb85()
    }

    fn red_2nm() -> f64 {
        rb().detuning_from_wavelength_offset(2e-9).unwrap()
    }

    fn single_trap() -> TrapSite {
        characterize_site(&rb(), 0.05, 15e-6, red_2nm(), Vec3::zeros()).unwrap()
    }

    #[test]
    fn single_beam_trap_depth() {
        let i = 2.0 * 0.05 / (PI * 15e-6 * 15e-6);
        let u = dipole_depth(&rb(), i, red_2nm()).unwrap() / KB;
        assert!(rel(u, -1.9e-3) < 0.1, "{u}");
        assert!(u < 0.0);
    }

    #[test]
    fn depth_edge_cases() {
        let d = red_2nm();
        assert_eq!(dipole_depth(&rb(), 0.0, d).unwrap(), 0.0);
        let u1 = dipole_depth(&rb(), 1e8, d).unwrap();
        let u2 = dipole_depth(&rb(), 1e8, 2.0 * d).unwrap();
        assert!(rel(u2, u1 / 2.0) < 1e-15);
        assert!(dipole_depth(&rb(), -1.0, d).is_err());
    }

    #[test]
    fn near_resonance_rejected() {
        let g = rb().natural_linewidth;
        assert!(dipole_depth(&rb(), 1e8, -99.0 * g).is_err());
        assert!(scattering_rate(&rb(), 1e8, 50.0 * g).is_err());
        assert!(dipole_depth(&rb(), 1e8, 0.0).is_err());
        assert!(dipole_depth(&rb(), 1e8, -100.0 * g).is_ok());
    }

    #[test]
    fn single_beam_scattering() {
        let i = 2.0 * 0.05 / (PI * 15e-6 * 15e-6);
        let r = scattering_rate(&rb(), i, red_2nm()).unwrap();
        assert!(rel(r, 1.5e3) < 0.05, "{r}");
        let r2 = scattering_rate(&rb(), i, 2.0 * red_2nm()).unwrap();
        assert!(rel(r2, r / 4.0) < 1e-15);
    }

    #[test]
    fn single_beam_frequencies() {
        let (wr, wz) = trap_frequencies(&rb(), -1.9e-3 * KB, 15e-6, 780e-9).unwrap();
        assert!(rel(wr, 5.8e4) < 0.02, "{wr}");
        assert!(rel(wz, 6.7e2) < 0.02, "{wz}");
        let (wr4, wz4) = trap_frequencies(&rb(), -4.0 * 1.9e-3 * KB, 15e-6, 780e-9).unwrap();
        assert!(rel(wr4, 2.0 * wr) < 1e-14 && rel(wz4, 2.0 * wz) < 1e-14);
        assert!(trap_frequencies(&rb(), 0.0, 15e-6, 780e-9).is_err());
        assert!(trap_frequencies(&rb(), 1e-27, 15e-6, 780e-9).is_err());
    }

    #[test]
    fn extent_examples() {
        let e = ground_state_extent(&rb(), 5.8e4).unwrap();
        assert!(rel(e, 81e-9) < 0.02, "{e}");
        let e4 = ground_state_extent(&rb(), 4.0 * 5.8e4).unwrap();
        assert!(rel(e4, e / 2.0) < 1e-15);
        assert!(ground_state_extent(&rb(), 0.0).is_err());
    }

    #[test]
    fn microlens_site_is_tightly_confined() {
        let s = characterize_site(&rb(), 1e-3, 1.5e-6, red_2nm(), Vec3::zeros()).unwrap();
        assert!(s.ground_state_extent < 100e-9);
        assert!(rel(s.ground_state_extent, 21e-9) < 0.05, "{}", s.ground_state_extent);
        assert!(s.lamb_dicke < 1.0);
    }

    #[test]
    fn single_trap_site_fields() {
        let s = single_trap();
        assert!(s.trapped);
        assert!(rel(s.depth_over_kb(), -1.9e-3) < 0.1);
        assert!(s.radial_frequency > s.axial_frequency);
        let z_r = s.rayleigh_range();
        assert!(rel(s.radial_frequency / s.axial_frequency, 2f64.sqrt() * z_r / s.waist) < 1e-12);
        assert!(rel(s.lamb_dicke, 2.0 * PI / s.wavelength * s.ground_state_extent) < 1e-15);
        // scattering outpaces axial oscillation in the macroscopic trap
        assert!(!s.sideband_coolable);
        let rec = s.record();
        assert!(rel(rec.depth_over_kb_mk, s.depth / KB * 1e3) < 1e-15);
    }

    #[test]
    fn zero_power_site_untrapped() {
        let s = characterize_site(&rb(), 0.0, 15e-6, red_2nm(), Vec3::zeros()).unwrap();
        assert!(!s.trapped);
        assert_eq!(s.depth, 0.0);
        assert_eq!(s.radial_frequency, 0.0);
        assert!(trap_frequencies(&rb(), s.depth, s.waist, s.wavelength).is_err());
    }

    #[test]
    fn blue_detuned_focus_repels() {
        let blue = -red_2nm();
        let s = characterize_site(&rb(), 1e-3, 1.5e-6, blue, Vec3::zeros()).unwrap();
        assert!(s.depth > 0.0);
        assert!(!s.trapped);
    }

    #[test]
    fn site_physics_is_local() {
        let a = characterize_site(&rb(), 1e-3, 2e-6, red_2nm(), Vec3::new(1e-4, 0.0, 0.0)).unwrap();
        let b = characterize_site(&rb(), 1e-3, 2e-6, red_2nm(), Vec3::new(-3e-4, 2e-4, 0.0)).unwrap();
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.radial_frequency, b.radial_frequency);
        assert_eq!(a.scattering_rate, b.scattering_rate);
    }

    #[test]
    fn depth_floor_marks_untrapped() {
        let mut s = characterize_site(&rb(), 1e-6, 1.5e-6, red_2nm(), Vec3::zeros()).unwrap();
        assert!(s.trapped);
        s.apply_depth_floor(0.141e-3 * KB);
        assert!(!s.trapped);
    }

    /// Second derivative of the full Gaussian potential by central differences.
    fn fd_frequencies(s: &TrapSite, mass: f64) -> (f64, f64) {
        let hr = s.waist * 1e-3;
        let hz = s.rayleigh_range() * 1e-3;
        let u = |p: Vec3| s.potential_at(&p);
        let u0 = u(Vec3::zeros());
        let d2r = (u(Vec3::new(hr, 0.0, 0.0)) - 2.0 * u0 + u(Vec3::new(-hr, 0.0, 0.0))) / (hr * hr);
        let d2z = (u(Vec3::new(0.0, 0.0, hz)) - 2.0 * u0 + u(Vec3::new(0.0, 0.0, -hz))) / (hz * hz);
        ((d2r / mass).sqrt(), (d2z / mass).sqrt())
    }

    #[test]
    fn frequencies_match_potential_curvature() {
        for (p, w) in [(0.05, 15e-6), (1e-3, 1.5e-6), (2e-4, 0.9e-6)] {
            let s = characterize_site(&rb(), p, w, red_2nm(), Vec3::zeros()).unwrap();
            let (wr, wz) = fd_frequencies(&s, rb().mass);
            assert!(rel(s.radial_frequency, wr) < 0.01);
            assert!(rel(s.axial_frequency, wz) < 0.01);
        }
    }

    proptest! {
        #[test]
        fn depth_linear_and_odd(i in 0.0f64..1e10, k in 0.0f64..10.0, dnm in 0.05f64..20.0) {
            let d = rb().detuning_from_wavelength_offset(dnm * 1e-9).unwrap();
            let u = dipole_depth(&rb(), i, d).unwrap();
            let uk = dipole_depth(&rb(), k * i, d).unwrap();
            prop_assert!((uk - k * u).abs() <= 1e-12 * (k * u).abs());
            prop_assert_eq!(dipole_depth(&rb(), i, -d).unwrap(), -u);
        }

        #[test]
        fn scattering_depth_ratio(i in 1.0f64..1e10, dnm in -20.0f64..20.0) {
            prop_assume!(dnm.abs() > 0.05);
            let sp = rb();
            let d = sp.detuning_from_wavelength_offset(dnm * 1e-9).unwrap();
            let u = dipole_depth(&sp, i, d).unwrap();
            let r = scattering_rate(&sp, i, d).unwrap();
            prop_assert!(rel(HBAR * r / u.abs(), sp.natural_linewidth / d.abs()) < 1e-12);
        }

        #[test]
        fn frequency_ratio_identity(u in 1e-30f64..1e-25, w in 0.5e-6f64..50e-6, l in 500e-9f64..1.1e-6) {
            let (wr, wz) = trap_frequencies(&rb(), -u, w, l).unwrap();
            let z_r = PI * w * w / l;
            prop_assert!(rel(wr / wz, 2f64.sqrt() * z_r / w) < 1e-12);
        }

        #[test]
        fn characterization_is_deterministic(p in 1e-5f64..0.1, w in 0.8e-6f64..20e-6) {
            let d = red_2nm();
            let a = characterize_site(&rb(), p, w, d, Vec3::zeros()).unwrap();
            let peak = 2.0 * p / (PI * w * w);
            let depth = dipole_depth(&rb(), peak, d).unwrap();
            let (wr, wz) = trap_frequencies(&rb(), depth, w, a.wavelength).unwrap();
            let ext = ground_state_extent(&rb(), wr).unwrap();
            prop_assert_eq!(a.depth, depth);
            prop_assert_eq!((a.radial_frequency, a.axial_frequency), (wr, wz));
            prop_assert_eq!(a.ground_state_extent, ext);
        }
    }
}
