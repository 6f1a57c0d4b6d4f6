//! Scenario files: sectioned TOML with unit-suffixed keys, converted to SI
//! when the domain objects are built.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::array::{ArrayOptions, Lattice, SiteIndex, SpacingSchedule, VcselConfig};
use crate::constants::{AMU, KB};
use crate::error::Result;
use crate::montecarlo::{McScenario, DEFAULT_TIME_STEP};
use crate::optics::{GaussianBeam, Illumination, LensKind, LensletIndex, MicrolensArray, RelayTelescope, Vec3};
use crate::register::RamanPulse;
use crate::species::{two_level_saturation_intensity, AtomSpecies};

#[derive(Debug, ThisError)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("config key `{key}`: {message}")]
    Key { key: String, message: String },
    #[error("config section [{0}] is required for this command")]
    MissingSection(&'static str),
}

fn key_error(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Key {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<SpeciesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lens_array: Option<LensArraySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub array: Option<ArraySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay: Option<RelaySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_beam: Option<DualBeamSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vcsel: Option<VcselSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addressing: Option<AddressingSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pulse: Vec<PulseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub montecarlo: Option<MonteCarloSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

/// `name` alone selects a built-in record; any other key overrides it.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_amu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_nm: Option<f64>,
    /// Γ/2π
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linewidth_MHz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation_intensity_mW_per_cm2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IlluminationKind {
    #[default]
    Gaussian,
    /// the beam power spread evenly over the array footprint
    Uniform,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    pub power_mW: f64,
    pub waist_um: f64,
    /// red wavelength offset from the transition (positive = red)
    pub detuning_nm: f64,
    #[serde(default)]
    pub center_x_um: f64,
    #[serde(default)]
    pub center_y_um: f64,
    #[serde(default)]
    pub illumination: IlluminationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LensKindKey {
    #[default]
    Refractive,
    Diffractive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LensArraySection {
    pub pitch_um: f64,
    pub diameter_um: f64,
    pub focal_length_um: f64,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub kind: LensKindKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKey {
    #[default]
    SingleBeam,
    DualBeam,
    VcselArray,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    #[serde(default)]
    pub source: SourceKey,
    #[serde(default)]
    pub min_depth_mK: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaySection {
    pub f1_mm: f64,
    pub f2_mm: f64,
    pub aperture_mm: f64,
}

/// Second beam: same waist and detuning as `[beam]`, tilted by `angle_mrad`.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualBeamSection {
    pub angle_mrad: f64,
    pub power_mW: f64,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VcselSection {
    /// per-emitter power unless overridden in `site_power_mW`
    pub power_mW: f64,
    /// [row, col] of switched-off emitters
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disabled: Vec<(usize, usize)>,
    /// [row, col, mW]
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub site_power_mW: Vec<(usize, usize, f64)>,
    /// [row, col, nm]
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wavelength_offset_nm: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// [time µs, angle mrad]
    pub samples_us_mrad: Vec<(f64, f64)>,
    pub hold_separation_um: f64,
    pub hold_duration_us: f64,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddressingSection {
    pub waist_um: f64,
    /// Ω₁/2π
    pub rabi1_MHz: f64,
    /// Ω₂/2π
    pub rabi2_MHz: f64,
    /// Δ/2π
    pub detuning_GHz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeKey {
    #[default]
    Primary,
    Secondary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub row: usize,
    pub col: usize,
    #[serde(default)]
    pub lattice: LatticeKey,
    pub duration_us: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub na: f64,
    pub scatter_count: f64,
    #[serde(default)]
    pub store_ms: f64,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    #[serde(default)]
    pub seed: u64,
    pub atom_count: usize,
    pub cloud_temperature_mK: f64,
    pub cloud_radius_um: f64,
    pub background_loss_rate_per_s: f64,
    #[serde(default)]
    pub include_recoil_heating: bool,
    pub duration_ms: f64,
    /// explicit sample times; otherwise `sample_count` evenly spaced
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_times_ms: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_step_ms: Option<f64>,
}

pub const DEFAULT_SAMPLE_COUNT: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub input: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,
}

/// Parses `text` after applying `section.key=value` overrides.
pub fn parse_scenario(text: &str, overrides: &[String]) -> std::result::Result<Scenario, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    from_table(table)
}

fn from_table(table: toml::Table) -> std::result::Result<Scenario, ConfigError> {
    serde_path_to_error::deserialize(table).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let key = if path == "." { missing_key(&inner).unwrap_or(path) } else { path };
        key_error(key, inner)
    })
}

fn missing_key(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let end = start + message[start..].find('`')?;
    Some(message[start..end].to_string())
}

/// Sets `path = value` in the table; `value` is read as a TOML value and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> std::result::Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| key_error(assignment, "override must look like section.key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(key_error(path, "empty key segment"));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| key_error(path, format!("`{part}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl Scenario {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn species(&self) -> std::result::Result<AtomSpecies, ConfigError> {
        let Some(s) = &self.species else {
            return Ok(AtomSpecies::rb85());
        };
        let base = AtomSpecies::builtin(&s.name);
        let pick = |v: Option<f64>, key: &str, from_base: Option<f64>| -> std::result::Result<f64, ConfigError> {
            v.or(from_base)
                .ok_or_else(|| key_error(format!("species.{key}"), format!("required for species `{}`", s.name)))
        };
        let mass = match s.mass_amu {
            Some(m) => m * AMU,
            None => pick(None, "mass_amu", base.as_ref().map(|b| b.mass))?,
        };
        let wavelength = match s.wavelength_nm {
            Some(l) => l * 1e-9,
            None => pick(None, "wavelength_nm", base.as_ref().map(|b| b.transition_wavelength))?,
        };
        let linewidth = match s.linewidth_MHz {
            Some(g) => 2.0 * PI * g * 1e6,
            None => pick(None, "linewidth_MHz", base.as_ref().map(|b| b.natural_linewidth))?,
        };
        let isat = match s.saturation_intensity_mW_per_cm2 {
            // 1 mW/cm² = 10 W/m²
            Some(i) => i * 10.0,
            None if s.wavelength_nm.is_none() && s.linewidth_MHz.is_none() && base.is_some() => {
                base.as_ref().unwrap().saturation_intensity
            }
            None => two_level_saturation_intensity(wavelength, linewidth),
        };
        Ok(AtomSpecies {
            name: s.name.clone(),
            mass,
            transition_wavelength: wavelength,
            natural_linewidth: linewidth,
            saturation_intensity: isat,
        })
    }

    fn beam_section(&self) -> std::result::Result<&BeamSection, ConfigError> {
        self.beam.as_ref().ok_or(ConfigError::MissingSection("beam"))
    }

    pub fn lens_array_section(&self) -> std::result::Result<&LensArraySection, ConfigError> {
        self.lens_array.as_ref().ok_or(ConfigError::MissingSection("lens_array"))
    }

    pub fn beam_power(&self) -> std::result::Result<f64, ConfigError> {
        Ok(self.beam_section()?.power_mW * 1e-3)
    }

    pub fn beam_waist(&self) -> std::result::Result<f64, ConfigError> {
        Ok(self.beam_section()?.waist_um * 1e-6)
    }

    pub fn beam_center(&self) -> std::result::Result<Vec3, ConfigError> {
        let b = self.beam_section()?;
        Ok(Vec3::new(b.center_x_um * 1e-6, b.center_y_um * 1e-6, 0.0))
    }

    /// Red wavelength offset (m).
    pub fn wavelength_offset(&self) -> std::result::Result<f64, ConfigError> {
        Ok(self.beam_section()?.detuning_nm * 1e-9)
    }

    pub fn microlens_array(&self) -> std::result::Result<Result<MicrolensArray>, ConfigError> {
        let l = self.lens_array_section()?;
        let kind = match l.kind {
            LensKindKey::Refractive => LensKind::Refractive,
            LensKindKey::Diffractive => LensKind::Diffractive,
        };
        Ok(MicrolensArray::new(
            l.pitch_um * 1e-6,
            l.diameter_um * 1e-6,
            l.focal_length_um * 1e-6,
            l.rows,
            l.cols,
            kind,
        ))
    }

    pub fn source(&self) -> SourceKey {
        self.array.as_ref().map(|a| a.source).unwrap_or_default()
    }

    pub fn array_options(&self) -> Result<ArrayOptions> {
        let mut opts = ArrayOptions::default();
        if let Some(a) = &self.array {
            opts.min_depth = a.min_depth_mK.abs() * 1e-3 * KB;
            if let Some(q) = a.quadrature_order {
                opts.quadrature_order = q;
            }
        }
        if let Some(r) = &self.relay {
            opts.relay = Some(RelayTelescope::new(r.f1_mm * 1e-3, r.f2_mm * 1e-3, r.aperture_mm * 1e-3)?);
        }
        Ok(opts)
    }

    /// Illumination of the lens array by `[beam]` (or a beam of another
    /// power and the same shape).
    pub fn illumination(
        &self,
        species: &AtomSpecies,
        power: f64,
        optics: &MicrolensArray,
    ) -> std::result::Result<Result<Illumination>, ConfigError> {
        let b = self.beam_section()?;
        let center = self.beam_center()?;
        Ok(match b.illumination {
            IlluminationKind::Uniform => {
                let area = optics.len() as f64 * optics.pitch * optics.pitch;
                Ok(Illumination::Uniform { intensity: power / area })
            }
            IlluminationKind::Gaussian => species
                .detuning_from_wavelength_offset(b.detuning_nm * 1e-9)
                .and_then(|d| {
                    GaussianBeam::new(
                        power,
                        b.waist_um * 1e-6,
                        species.wavelength_for_detuning(d),
                        center,
                        Vec3::z(),
                    )
                })
                .map(Illumination::Gaussian),
        })
    }

    pub fn dual_beam(&self) -> std::result::Result<(f64, f64), ConfigError> {
        let d = self.dual_beam.as_ref().ok_or(ConfigError::MissingSection("dual_beam"))?;
        Ok((d.angle_mrad * 1e-3, d.power_mW * 1e-3))
    }

    pub fn vcsel_config(&self, optics: &MicrolensArray) -> std::result::Result<VcselConfig, ConfigError> {
        let v = self.vcsel.as_ref().ok_or(ConfigError::MissingSection("vcsel"))?;
        let mut cfg = VcselConfig::uniform(optics, v.power_mW * 1e-3);
        let check = |key: &str, r: usize, c: usize| -> std::result::Result<LensletIndex, ConfigError> {
            let i = LensletIndex::new(r, c);
            if optics.contains(i) {
                Ok(i)
            } else {
                Err(key_error(format!("vcsel.{key}"), format!("site ({r}, {c}) is outside the lattice")))
            }
        };
        for &(r, c) in &v.disabled {
            cfg.per_site_enabled.insert(check("disabled", r, c)?, false);
        }
        for &(r, c, p) in &v.site_power_mW {
            cfg.per_site_power.insert(check("site_power_mW", r, c)?, p * 1e-3);
        }
        for &(r, c, nm) in &v.wavelength_offset_nm {
            cfg.wavelength_offsets.insert(check("wavelength_offset_nm", r, c)?, nm * 1e-9);
        }
        Ok(cfg)
    }

    pub fn spacing_schedule(&self) -> std::result::Result<SpacingSchedule, ConfigError> {
        let s = self.schedule.as_ref().ok_or(ConfigError::MissingSection("schedule"))?;
        Ok(SpacingSchedule {
            samples: s.samples_us_mrad.iter().map(|&(t, a)| (t * 1e-6, a * 1e-3)).collect(),
            hold_separation: s.hold_separation_um * 1e-6,
            hold_duration: s.hold_duration_us * 1e-6,
        })
    }

    pub fn pulses(&self) -> std::result::Result<Vec<RamanPulse>, ConfigError> {
        if self.pulse.is_empty() {
            return Ok(Vec::new());
        }
        let a = self.addressing.as_ref().ok_or(ConfigError::MissingSection("addressing"))?;
        let mhz = 2.0 * PI * 1e6;
        Ok(self
            .pulse
            .iter()
            .map(|p| RamanPulse {
                target_site: SiteIndex {
                    lattice: match p.lattice {
                        LatticeKey::Primary => Lattice::Primary,
                        LatticeKey::Secondary => Lattice::Secondary,
                    },
                    row: p.row,
                    col: p.col,
                },
                beam_waist_at_plane: a.waist_um * 1e-6,
                rabi_1: a.rabi1_MHz * mhz,
                rabi_2: a.rabi2_MHz * mhz,
                single_photon_detuning: a.detuning_GHz * 1e3 * mhz,
                duration: p.duration_us * 1e-6,
                phase: p.phase_rad,
            })
            .collect())
    }

    pub fn readout_section(&self) -> std::result::Result<&ReadoutSection, ConfigError> {
        self.readout.as_ref().ok_or(ConfigError::MissingSection("readout"))
    }

    pub fn mc_scenario(&self, seed: Option<u64>) -> std::result::Result<McScenario, ConfigError> {
        let m = self.montecarlo.as_ref().ok_or(ConfigError::MissingSection("montecarlo"))?;
        let duration = m.duration_ms * 1e-3;
        let sample_times = match &m.sample_times_ms {
            Some(ts) => ts.iter().map(|t| t * 1e-3).collect(),
            None => McScenario::even_samples(duration, m.sample_count.unwrap_or(DEFAULT_SAMPLE_COUNT)),
        };
        Ok(McScenario {
            seed: seed.unwrap_or(m.seed),
            atom_count: m.atom_count,
            cloud_temperature: m.cloud_temperature_mK * 1e-3,
            cloud_radius: m.cloud_radius_um * 1e-6,
            background_loss_rate: m.background_loss_rate_per_s,
            include_recoil_heating: m.include_recoil_heating,
            duration,
            sample_times,
            time_step: m.time_step_ms.map(|t| t * 1e-3).unwrap_or(DEFAULT_TIME_STEP),
        })
    }

    pub fn formats(&self) -> Vec<Format> {
        self.output
            .as_ref()
            .and_then(|o| o.formats.clone())
            .unwrap_or_else(|| vec![Format::Json, Format::Csv])
    }

    pub fn output_directory(&self) -> Option<PathBuf> {
        self.output.as_ref().and_then(|o| o.directory.clone())
    }
}
