//! Qubit layer on top of a trap array: one two-level Bloch vector per site,
//! two-photon Raman addressing, scattering-limited coherence, and fluorescence
//! readout.
//!
//! Rotation convention: a pulse of phase φ drives about n = (cos φ, sin φ, 0)
//! with the optical Bloch equations u̇ = 0, v̇ = Ω w, ẇ = −Ω v (for φ = 0), so
//! a π/2 pulse on |0⟩ = (0, 0, −1) gives (0, −1, 0).

use std::collections::BTreeMap;

use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::array::{SiteIndex, TrapArray};
use crate::error::{non_negative, positive, Error, Result};
use crate::optics::Vec3;
use crate::trapfield::TrapSite;

/// Required ratio |Δ| / max(Ω₁, Ω₂) for adiabatic elimination.
pub const MIN_RAMAN_DETUNING_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    pub bloch: Vec3,
}

impl QubitState {
    pub fn new(u: f64, v: f64, w: f64) -> Result<Self> {
        let bloch = Vec3::new(u, v, w);
        let n = bloch.norm();
        if !n.is_finite() || n > 1.0 + 1e-12 {
            return Err(Error::invalid("Bloch vector norm", n, "must be <= 1"));
        }
        Ok(QubitState { bloch })
    }

    /// |0⟩, w = −1
    pub fn ground() -> Self {
        QubitState {
            bloch: Vec3::new(0.0, 0.0, -1.0),
        }
    }

    /// |1⟩, w = +1
    pub fn excited() -> Self {
        QubitState {
            bloch: Vec3::new(0.0, 0.0, 1.0),
        }
    }

    pub fn u(&self) -> f64 {
        self.bloch.x
    }
    pub fn v(&self) -> f64 {
        self.bloch.y
    }
    pub fn w(&self) -> f64 {
        self.bloch.z
    }

    /// Probability of the fluorescing state |1⟩.
    pub fn bright_probability(&self) -> f64 {
        (1.0 + self.w()) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanPulse {
    pub target_site: SiteIndex,
    /// waist of both Raman beams at the trap plane (m)
    pub beam_waist_at_plane: f64,
    /// single-photon Rabi frequencies (rad/s)
    pub rabi_1: f64,
    pub rabi_2: f64,
    /// Δ (rad/s)
    pub single_photon_detuning: f64,
    /// s
    pub duration: f64,
    /// rad
    pub phase: f64,
}

impl RamanPulse {
    pub fn validate(&self) -> Result<()> {
        positive("beam_waist_at_plane", self.beam_waist_at_plane)?;
        non_negative("rabi_1", self.rabi_1)?;
        non_negative("rabi_2", self.rabi_2)?;
        non_negative("duration", self.duration)?;
        if !self.phase.is_finite() {
            return Err(Error::invalid("phase", self.phase, "must be finite"));
        }
        let strongest = self.rabi_1.max(self.rabi_2);
        let delta = self.single_photon_detuning;
        if !delta.is_finite() || delta.abs() < MIN_RAMAN_DETUNING_RATIO * strongest || delta == 0.0 {
            return Err(Error::OutOfValidity(format!(
                "Raman detuning {delta:.3e} rad/s must exceed {MIN_RAMAN_DETUNING_RATIO}·max(Ω₁, Ω₂) = {:.3e} rad/s",
                MIN_RAMAN_DETUNING_RATIO * strongest
            )));
        }
        Ok(())
    }

    /// Pulse area θ = Ω_eff · duration at the target.
    pub fn area(&self) -> Result<f64> {
        Ok(effective_rabi(self)? * self.duration)
    }
}

/// Two-photon Rabi frequency |Ω₁Ω₂ / 2Δ|.
pub fn effective_rabi(pulse: &RamanPulse) -> Result<f64> {
    pulse.validate()?;
    Ok((pulse.rabi_1 * pulse.rabi_2 / (2.0 * pulse.single_photon_detuning)).abs())
}

/// Rotates a Bloch vector by pulse area `angle` about the equatorial axis at
/// azimuth `phase`.
pub fn rotate_by(state: &QubitState, angle: f64, phase: f64) -> QubitState {
    let (s, c) = phase.sin_cos();
    let axis = Unit::new_unchecked(Vec3::new(c, s, 0.0));
    // Bloch precession dR/dt = R × Ω is a left-handed turn about the drive axis.
    let rot = Rotation3::from_axis_angle(&axis, -angle);
    QubitState {
        bloch: rot * state.bloch,
    }
}

pub fn rotate(state: &QubitState, pulse: &RamanPulse) -> Result<QubitState> {
    Ok(rotate_by(state, pulse.area()?, pulse.phase))
}

/// Relative two-photon coupling at every site, Ω_eff(site)/Ω_eff(target).
///
/// Both beams are Gaussian spots centered on the target; each Rabi frequency
/// follows the field envelope exp(−r²/w²), so the ratio is exp(−2r²/w²).
pub fn crosstalk_map(array: &TrapArray, pulse: &RamanPulse) -> Result<BTreeMap<SiteIndex, f64>> {
    positive("beam_waist_at_plane", pulse.beam_waist_at_plane)?;
    let target = array
        .get(pulse.target_site)
        .ok_or_else(|| Error::InvalidSite(pulse.target_site.to_string()))?;
    let center = target.site.position;
    let w2 = pulse.beam_waist_at_plane * pulse.beam_waist_at_plane;
    Ok(array
        .sites
        .iter()
        .map(|s| {
            let ratio = if s.index == pulse.target_site {
                1.0
            } else {
                let d = s.site.position - center;
                (-2.0 * (d.x * d.x + d.y * d.y) / w2).exp()
            };
            (s.index, ratio)
        })
        .collect())
}

/// Single-beam light shift leaking onto the most exposed non-target site.
/// Reported as a diagnostic only; it is not applied to the qubit states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkDiagnostic {
    /// I(site)/I(target) of one addressing beam at the most exposed neighbor
    pub max_neighbor_intensity_ratio: f64,
    /// light shift Ω²/(4Δ) of the stronger beam, scaled by that ratio (rad/s)
    pub max_neighbor_shift_rad_s: f64,
}

pub fn stark_diagnostic(array: &TrapArray, pulse: &RamanPulse) -> Result<StarkDiagnostic> {
    pulse.validate()?;
    let map = crosstalk_map(array, pulse)?;
    // one beam alone: intensity ratio exp(−2r²/w²) equals the two-beam field ratio
    let ratio = map
        .iter()
        .filter(|(i, _)| **i != pulse.target_site)
        .map(|(_, r)| *r)
        .fold(0.0, f64::max);
    let rabi = pulse.rabi_1.max(pulse.rabi_2);
    Ok(StarkDiagnostic {
        max_neighbor_intensity_ratio: ratio,
        max_neighbor_shift_rad_s: rabi * rabi / (4.0 * pulse.single_photon_detuning.abs()) * ratio,
    })
}

/// Photon-scattering bound on coherence, 1/Γ_sc.
pub fn coherence_time_estimate(site: &TrapSite) -> Result<f64> {
    if !site.trapped {
        return Err(Error::Untrapped(format!("at {:?}", site.position.as_slice())));
    }
    positive("scattering_rate", site.scattering_rate)?;
    Ok(1.0 / site.scattering_rate)
}

/// Fraction of isotropic fluorescence inside a cone of numerical aperture
/// `na`: (1 − √(1 − NA²)) / 2.
pub fn collection_efficiency(na: f64) -> Result<f64> {
    if !(na > 0.0 && na < 1.0) {
        return Err(Error::invalid("numerical aperture", na, "must lie in (0, 1)"));
    }
    Ok((1.0 - (1.0 - na * na).sqrt()) / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QubitRegister {
    pub states: BTreeMap<SiteIndex, QubitState>,
    /// only trapped sites have an entry
    pub coherence_time: BTreeMap<SiteIndex, f64>,
}

impl QubitRegister {
    /// Every site in |0⟩; trapped sites get the scattering-limited coherence time.
    pub fn from_array(array: &TrapArray) -> Result<Self> {
        let mut states = BTreeMap::new();
        let mut coherence_time = BTreeMap::new();
        for s in &array.sites {
            states.insert(s.index, QubitState::ground());
            if s.site.trapped {
                coherence_time.insert(s.index, coherence_time_estimate(&s.site)?);
            }
        }
        Ok(QubitRegister { states, coherence_time })
    }

    pub fn state(&self, site: SiteIndex) -> Result<&QubitState> {
        self.states.get(&site).ok_or_else(|| Error::InvalidSite(site.to_string()))
    }

    /// Applies a Raman pulse to the whole register: each site turns by the
    /// pulse area scaled with its crosstalk ratio. Sites with zero ratio are
    /// left bit-identical.
    pub fn apply_pulse(&mut self, array: &TrapArray, pulse: &RamanPulse) -> Result<()> {
        let area = pulse.area()?;
        let map = crosstalk_map(array, pulse)?;
        for (idx, ratio) in map {
            if ratio == 0.0 {
                continue;
            }
            let state = self.states.get_mut(&idx).ok_or_else(|| Error::InvalidSite(idx.to_string()))?;
            *state = rotate_by(state, area * ratio, pulse.phase);
        }
        Ok(())
    }

    /// Free storage for `duration`: equatorial components decay as
    /// exp(−t/T) with each site's coherence time; populations are untouched.
    pub fn store(&mut self, duration: f64) -> Result<()> {
        non_negative("duration", duration)?;
        for (idx, state) in self.states.iter_mut() {
            if let Some(t) = self.coherence_time.get(idx) {
                let k = (-duration / t).exp();
                state.bloch.x *= k;
                state.bloch.y *= k;
            }
        }
        Ok(())
    }

    pub fn readout(&self, site: SiteIndex, na: f64, scatter_count: f64) -> Result<f64> {
        readout(self, site, na, scatter_count)
    }

    pub fn record(&self) -> Vec<RegisterEntry> {
        self.states
            .iter()
            .map(|(idx, s)| RegisterEntry {
                site: *idx,
                u: s.u(),
                v: s.v(),
                w: s.w(),
                coherence_time_s: self.coherence_time.get(idx).copied(),
            })
            .collect()
    }
}

/// Expected detected photons: scatter_count · collection_efficiency(NA) · p(bright).
pub fn readout(register: &QubitRegister, site: SiteIndex, na: f64, scatter_count: f64) -> Result<f64> {
    non_negative("scatter_count", scatter_count)?;
    let state = register.state(site)?;
    Ok(scatter_count * collection_efficiency(na)? * state.bright_probability())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterEntry {
    pub site: SiteIndex,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub coherence_time_s: Option<f64>,
}
