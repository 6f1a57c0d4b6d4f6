//! Trap arrays built from a microlens array and its light source: a single
//! broad beam, two beams at a small relative angle, or one VCSEL per lenslet.
//! Also evaluates time-dependent angle schedules that bring the two lattices of
//! a dual-beam array together for a gate.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::C;
use crate::error::{non_negative, positive, Error, Result};
use crate::optics::{
    dual_beam_site_offset, GaussianBeam, Illumination, LensletIndex, MicrolensArray, RelayTelescope,
    Vec3, DEFAULT_QUADRATURE_ORDER, MAX_PARAXIAL_ANGLE,
};
use crate::species::AtomSpecies;
use crate::trapfield::{characterize_site, SiteRecord, TrapSite};

/// Sites closer than this many spot waists are flagged: the independent-foci
/// model ignores interference between overlapping spots.
pub const INTERFERENCE_WAISTS: f64 = 3.0;

/// Allowed deviation of a site from its lattice position (m).
pub const LATTICE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lattice {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SiteIndex {
    pub lattice: Lattice,
    pub row: usize,
    pub col: usize,
}

impl SiteIndex {
    pub fn primary(row: usize, col: usize) -> Self {
        SiteIndex {
            lattice: Lattice::Primary,
            row,
            col,
        }
    }

    pub fn secondary(row: usize, col: usize) -> Self {
        SiteIndex {
            lattice: Lattice::Secondary,
            row,
            col,
        }
    }

    pub fn lenslet(&self) -> LensletIndex {
        LensletIndex::new(self.row, self.col)
    }
}

impl std::fmt::Display for SiteIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.lattice {
            Lattice::Primary => "",
            Lattice::Secondary => "'",
        };
        write!(f, "({}, {}){tag}", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Geometry {
    #[serde(rename = "1D")]
    OneD,
    #[serde(rename = "2D")]
    TwoD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    SingleBeam,
    DualBeam,
    VcselArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArraySite {
    pub index: SiteIndex,
    pub site: TrapSite,
    /// Airy first-minimum radius of the focus (m), reported alongside the
    /// Gaussian waist used for the trap physics.
    pub airy_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapArray {
    pub sites: Vec<ArraySite>,
    /// lattice pitch at the trap plane (m)
    pub pitch: f64,
    pub geometry: Geometry,
    pub source: SourceKind,
    /// secondary-lattice displacement along +x (m); 0 unless dual-beam
    pub offset: f64,
    /// nominal detuning shared by all sites (rad/s)
    pub detuning: f64,
    pub rows: usize,
    pub cols: usize,
    /// relay magnification between lens focal plane and trap plane
    pub magnification: f64,
    /// -1 when the relay inverts the image
    orientation: f64,
    plane_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayOptions {
    /// sites shallower than this (J, magnitude) are marked untrapped
    pub min_depth: f64,
    pub quadrature_order: usize,
    pub relay: Option<RelayTelescope>,
}

impl Default for ArrayOptions {
    fn default() -> Self {
        ArrayOptions {
            min_depth: 0.0,
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
            relay: None,
        }
    }
}

/// Per-site source description fed to [`assemble`].
struct SiteSource {
    index: SiteIndex,
    power: f64,
    detuning: f64,
}

struct Frame {
    magnification: f64,
    orientation: f64,
    plane_z: f64,
}

impl Frame {
    fn new(optics: &MicrolensArray, relay: Option<&RelayTelescope>) -> Self {
        match relay {
            Some(r) => Frame {
                magnification: r.magnification(),
                orientation: -1.0,
                plane_z: 0.0,
            },
            None => Frame {
                magnification: 1.0,
                orientation: 1.0,
                plane_z: optics.focal_length,
            },
        }
    }
}

fn assemble(
    optics: &MicrolensArray,
    species: &AtomSpecies,
    detuning: f64,
    opts: &ArrayOptions,
    source: SourceKind,
    offset: f64,
    sources: Vec<SiteSource>,
) -> Result<TrapArray> {
    optics.validate()?;
    species.validate()?;
    non_negative("min_depth", opts.min_depth)?;
    let frame = Frame::new(optics, opts.relay.as_ref());
    let mut array = TrapArray {
        sites: Vec::new(),
        pitch: optics.pitch * frame.magnification,
        geometry: if optics.rows == 1 || optics.cols == 1 {
            Geometry::OneD
        } else {
            Geometry::TwoD
        },
        source,
        offset,
        detuning,
        rows: optics.rows,
        cols: optics.cols,
        magnification: frame.magnification,
        orientation: frame.orientation,
        plane_z: frame.plane_z,
    };
    let sites: Result<Vec<ArraySite>> = sources
        .par_iter()
        .map(|s| {
            let wavelength = species.wavelength_for_detuning(s.detuning);
            let spot = optics.focal_spot(wavelength)?;
            let waist = spot.gaussian_waist * frame.magnification;
            let position = array.lattice_position(s.index);
            let mut site = characterize_site(species, s.power, waist, s.detuning, position)?;
            site.apply_depth_floor(opts.min_depth);
            Ok(ArraySite {
                index: s.index,
                site,
                airy_radius: spot.airy_radius * frame.magnification,
            })
        })
        .collect();
    array.sites = sites?;
    Ok(array)
}

fn lattice_sources(
    powers: &BTreeMap<LensletIndex, f64>,
    lattice: Lattice,
    detuning: f64,
) -> impl Iterator<Item = SiteSource> + '_ {
    powers.iter().map(move |(i, &p)| SiteSource {
        index: SiteIndex {
            lattice,
            row: i.row,
            col: i.col,
        },
        power: p,
        detuning,
    })
}

/// Array from one red-detuned Gaussian beam spread over the lenslets.
pub fn build_array(
    array_optics: &MicrolensArray,
    beam: &GaussianBeam,
    species: &AtomSpecies,
    detuning: f64,
    opts: &ArrayOptions,
) -> Result<TrapArray> {
    build_array_with_illumination(array_optics, &Illumination::Gaussian(beam.clone()), species, detuning, opts)
}

pub fn build_array_with_illumination(
    array_optics: &MicrolensArray,
    illumination: &Illumination,
    species: &AtomSpecies,
    detuning: f64,
    opts: &ArrayOptions,
) -> Result<TrapArray> {
    let powers = illumination.lenslet_powers(array_optics, opts.quadrature_order)?;
    let sources = lattice_sources(&powers, Lattice::Primary, detuning).collect();
    assemble(array_optics, species, detuning, opts, SourceKind::SingleBeam, 0.0, sources)
}

/// Two beams crossing the array at a relative angle produce two lattices
/// displaced by f·tan(angle). The power share of the tilted beam is evaluated
/// at normal incidence (paraxial angles).
pub fn build_dual_beam_array(
    array_optics: &MicrolensArray,
    first: &Illumination,
    second: &Illumination,
    angle_between_beams: f64,
    species: &AtomSpecies,
    detuning: f64,
    opts: &ArrayOptions,
) -> Result<TrapArray> {
    let m = Frame::new(array_optics, opts.relay.as_ref()).magnification;
    let offset = dual_beam_site_offset(array_optics, angle_between_beams)? * m;
    let p1 = first.lenslet_powers(array_optics, opts.quadrature_order)?;
    let p2 = second.lenslet_powers(array_optics, opts.quadrature_order)?;
    let sources = lattice_sources(&p1, Lattice::Primary, detuning)
        .chain(lattice_sources(&p2, Lattice::Secondary, detuning))
        .collect();
    assemble(array_optics, species, detuning, opts, SourceKind::DualBeam, offset, sources)
}

/// Per-site VCSEL settings. Every map must cover exactly the lenslets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VcselConfig {
    pub per_site_power: BTreeMap<LensletIndex, f64>,
    pub per_site_enabled: BTreeMap<LensletIndex, bool>,
    /// emission wavelength offset from the nominal trap wavelength (m)
    pub wavelength_offsets: BTreeMap<LensletIndex, f64>,
}

impl VcselConfig {
    /// All sites enabled at the same power and nominal wavelength.
    pub fn uniform(array_optics: &MicrolensArray, power: f64) -> Self {
        let idx: Vec<_> = array_optics.indices().collect();
        VcselConfig {
            per_site_power: idx.iter().map(|&i| (i, power)).collect(),
            per_site_enabled: idx.iter().map(|&i| (i, true)).collect(),
            wavelength_offsets: idx.iter().map(|&i| (i, 0.0)).collect(),
        }
    }

    pub fn validate(&self, array_optics: &MicrolensArray) -> Result<()> {
        fn covers<V>(name: &str, map: &BTreeMap<LensletIndex, V>, optics: &MicrolensArray) -> Result<()> {
            if map.len() != optics.len() || !map.keys().all(|k| optics.contains(*k)) {
                return Err(Error::LatticeMismatch(format!(
                    "{name} has {} entries for a {}x{} lattice",
                    map.len(),
                    optics.rows,
                    optics.cols
                )));
            }
            Ok(())
        }
        covers("per_site_power", &self.per_site_power, array_optics)?;
        covers("per_site_enabled", &self.per_site_enabled, array_optics)?;
        covers("wavelength_offsets", &self.wavelength_offsets, array_optics)?;
        for p in self.per_site_power.values() {
            non_negative("per_site_power", *p)?;
        }
        for d in self.wavelength_offsets.values() {
            if !d.is_finite() {
                return Err(Error::invalid("wavelength_offset", *d, "must be finite"));
            }
        }
        Ok(())
    }
}

/// One VCSEL per lenslet, all of its power focused into that lenslet's trap.
/// Disabled emitters give untrapped sites; a wavelength offset shifts only
/// that site's detuning.
pub fn build_vcsel_array(
    array_optics: &MicrolensArray,
    config: &VcselConfig,
    species: &AtomSpecies,
    detuning: f64,
    opts: &ArrayOptions,
) -> Result<TrapArray> {
    config.validate(array_optics)?;
    let nominal = species.wavelength_for_detuning(detuning);
    let omega0 = species.transition_angular_frequency();
    let sources = array_optics
        .indices()
        .map(|i| {
            let enabled = config.per_site_enabled[&i];
            let dl = config.wavelength_offsets[&i];
            let site_detuning = if dl == 0.0 {
                detuning
            } else {
                2.0 * PI * C / (nominal + dl) - omega0
            };
            SiteSource {
                index: SiteIndex::primary(i.row, i.col),
                power: if enabled { config.per_site_power[&i] } else { 0.0 },
                detuning: site_detuning,
            }
        })
        .collect();
    assemble(array_optics, species, detuning, opts, SourceKind::VcselArray, 0.0, sources)
}

impl TrapArray {
    /// Nominal position of a site on its lattice.
    pub fn lattice_position(&self, index: SiteIndex) -> Vec3 {
        let x = (index.col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pitch * self.orientation;
        let y = (index.row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pitch * self.orientation;
        let shift = match index.lattice {
            Lattice::Primary => 0.0,
            Lattice::Secondary => self.offset,
        };
        Vec3::new(x + shift, y, self.plane_z)
    }

    pub fn get(&self, index: SiteIndex) -> Option<&ArraySite> {
        self.sites.iter().find(|s| s.index == index)
    }

    pub fn trapped_count(&self) -> usize {
        self.sites.iter().filter(|s| s.site.trapped).count()
    }

    /// Checks the lattice and shared-species invariants.
    pub fn validate(&self) -> Result<()> {
        for s in &self.sites {
            let d = (s.site.position - self.lattice_position(s.index)).norm();
            if d > LATTICE_TOLERANCE {
                return Err(Error::LatticeMismatch(format!("site {} is {d:.3e} m off its lattice point", s.index)));
            }
        }
        Ok(())
    }

    /// Copy with the secondary lattice moved to `offset`.
    pub fn with_offset(&self, offset: f64) -> TrapArray {
        let mut out = self.clone();
        out.offset = offset;
        let positions: Vec<Vec3> = out.sites.iter().map(|s| out.lattice_position(s.index)).collect();
        for (s, p) in out.sites.iter_mut().zip(positions) {
            s.site.position = p;
        }
        out
    }

    pub fn record(&self) -> ArrayRecord {
        ArrayRecord {
            pitch_m: self.pitch,
            geometry: self.geometry,
            source: self.source,
            offset_m: self.offset,
            detuning_rad_s: self.detuning,
            magnification: self.magnification,
            rows: self.rows,
            cols: self.cols,
            sites: self
                .sites
                .iter()
                .map(|s| ArraySiteRecord {
                    lattice: s.index.lattice,
                    row: s.index.row,
                    col: s.index.col,
                    airy_radius_m: s.airy_radius,
                    site: s.site.record(),
                })
                .collect(),
        }
    }

    /// `site_row,site_col,x_m,y_m,power_W` for the primary lattice.
    pub fn power_map_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["site_row", "site_col", "x_m", "y_m", "power_W"]).unwrap();
        for s in self.sites.iter().filter(|s| s.index.lattice == Lattice::Primary) {
            let p = &s.site.position;
            w.write_record(&[
                s.index.row.to_string(),
                s.index.col.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                s.site.source_power.to_string(),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// Per-site summary table over all lattices.
    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "lattice",
            "site_row",
            "site_col",
            "x_m",
            "y_m",
            "power_W",
            "depth_over_kB_mK",
            "radial_frequency_rad_s",
            "axial_frequency_rad_s",
            "scattering_rate_per_s",
            "ground_state_extent_m",
            "trapped",
        ])
        .unwrap();
        for s in &self.sites {
            let t = &s.site;
            w.write_record(&[
                match s.index.lattice {
                    Lattice::Primary => "primary".to_string(),
                    Lattice::Secondary => "secondary".to_string(),
                },
                s.index.row.to_string(),
                s.index.col.to_string(),
                t.position.x.to_string(),
                t.position.y.to_string(),
                t.source_power.to_string(),
                (t.depth_over_kb() * 1e3).to_string(),
                t.radial_frequency.to_string(),
                t.axial_frequency.to_string(),
                t.scattering_rate.to_string(),
                t.ground_state_extent.to_string(),
                t.trapped.to_string(),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySiteRecord {
    pub lattice: Lattice,
    pub row: usize,
    pub col: usize,
    pub airy_radius_m: f64,
    #[serde(flatten)]
    pub site: SiteRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayRecord {
    pub pitch_m: f64,
    pub geometry: Geometry,
    pub source: SourceKind,
    pub offset_m: f64,
    pub detuning_rad_s: f64,
    pub magnification: f64,
    pub rows: usize,
    pub cols: usize,
    pub sites: Vec<ArraySiteRecord>,
}

/// Angle between the two array beams as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingSchedule {
    /// (time s, angle rad), piecewise-linear in between
    pub samples: Vec<(f64, f64)>,
    /// target lattice separation for the gate (m)
    pub hold_separation: f64,
    /// minimum time the separation must be held (s)
    pub hold_duration: f64,
}

impl SpacingSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("schedule samples", 0.0, "need at least one sample"));
        }
        for w in self.samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("schedule time", w[1].0, "times must be strictly increasing"));
            }
        }
        for &(t, a) in &self.samples {
            if !t.is_finite() {
                return Err(Error::invalid("schedule time", t, "must be finite"));
            }
            if !a.is_finite() || a.abs() > MAX_PARAXIAL_ANGLE {
                return Err(Error::invalid("schedule angle", a, "must be paraxial (|angle| <= 0.2 rad)"));
            }
        }
        positive("hold_separation", self.hold_separation)?;
        non_negative("hold_duration", self.hold_duration)?;
        Ok(())
    }

    /// Piecewise-linear angle, held constant outside the sampled range.
    pub fn angle_at(&self, t: f64) -> f64 {
        let s = &self.samples;
        if t <= s[0].0 {
            return s[0].1;
        }
        if t >= s[s.len() - 1].0 {
            return s[s.len() - 1].1;
        }
        let k = s.partition_point(|&(ts, _)| ts <= t);
        let (t0, a0) = s[k - 1];
        let (t1, a1) = s[k];
        a0 + (a1 - a0) * (t - t0) / (t1 - t0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum GateWindow {
    /// the separation never drops to the hold separation
    NoWindow,
    /// longest contiguous interval with separation ≤ hold separation
    Window {
        start: f64,
        end: f64,
        duration: f64,
        /// duration ≥ hold_duration
        sufficient: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleFrame {
    pub time: f64,
    pub angle: f64,
    pub offset: f64,
    pub array: TrapArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOutcome {
    pub frames: Vec<ScheduleFrame>,
    pub window: GateWindow,
    pub min_separation: f64,
    pub warnings: Vec<String>,
}

impl ScheduleOutcome {
    /// `time_s,angle_rad,offset_m` per schedule sample.
    pub fn offsets_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time_s", "angle_rad", "offset_m"]).unwrap();
        for f in &self.frames {
            w.write_record(&[f.time.to_string(), f.angle.to_string(), f.offset.to_string()])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Moves the secondary lattice of a dual-beam array along `schedule` and
/// reports the gate window.
pub fn apply_spacing_schedule(
    base: &TrapArray,
    schedule: &SpacingSchedule,
    array_optics: &MicrolensArray,
) -> Result<ScheduleOutcome> {
    if base.source != SourceKind::DualBeam {
        return Err(Error::OutOfValidity("spacing schedules need a dual-beam array".into()));
    }
    schedule.validate()?;
    let scale = base.magnification;
    let offset_of = |angle: f64| -> Result<f64> { Ok(dual_beam_site_offset(array_optics, angle)? * scale) };

    let frames = schedule
        .samples
        .iter()
        .map(|&(t, a)| {
            let offset = offset_of(a)?;
            Ok(ScheduleFrame {
                time: t,
                angle: a,
                offset,
                array: base.with_offset(offset),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // |f·tan θ| ≤ s  ⇔  |θ| ≤ atan(s/f); the tolerance absorbs the tan/atan round trip.
    let limit = (schedule.hold_separation / (array_optics.focal_length * scale)).atan() * (1.0 + 1e-9);
    let intervals = within_limit_intervals(&schedule.samples, limit);
    let window = intervals
        .iter()
        .max_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)))
        .map_or(GateWindow::NoWindow, |&(start, end)| {
            let duration = end - start;
            GateWindow::Window {
                start,
                end,
                duration,
                sufficient: duration >= schedule.hold_duration * (1.0 - 1e-9),
            }
        });

    let min_angle = min_abs_angle(&schedule.samples);
    let min_separation = offset_of(min_angle)?.abs();
    let max_waist = base.sites.iter().map(|s| s.site.waist).fold(0.0, f64::max);
    let mut warnings = Vec::new();
    if min_separation < INTERFERENCE_WAISTS * max_waist {
        warnings.push(format!(
            "lattice separation reaches {min_separation:.3e} m, below {INTERFERENCE_WAISTS} spot waists ({:.3e} m); \
             interference between neighboring foci is not modeled",
            INTERFERENCE_WAISTS * max_waist
        ));
    }
    Ok(ScheduleOutcome {
        frames,
        window,
        min_separation,
        warnings,
    })
}

/// Maximal time intervals on which the interpolated |angle| ≤ limit.
fn within_limit_intervals(samples: &[(f64, f64)], limit: f64) -> Vec<(f64, f64)> {
    let mut pieces: Vec<(f64, f64)> = Vec::new();
    if samples.len() == 1 {
        if samples[0].1.abs() <= limit {
            pieces.push((samples[0].0, samples[0].0));
        }
        return pieces;
    }
    for w in samples.windows(2) {
        let ((t0, a0), (t1, a1)) = (w[0], w[1]);
        let slope = a1 - a0;
        let (lo, hi) = if slope == 0.0 {
            if a0.abs() <= limit {
                (0.0, 1.0)
            } else {
                continue;
            }
        } else {
            // a0 + slope·s ∈ [−limit, limit]
            let s1 = (-limit - a0) / slope;
            let s2 = (limit - a0) / slope;
            (s1.min(s2).max(0.0), s1.max(s2).min(1.0))
        };
        if lo > hi {
            continue;
        }
        let piece = (t0 + lo * (t1 - t0), t0 + hi * (t1 - t0));
        match pieces.last_mut() {
            Some(last) if piece.0 <= last.1 => last.1 = last.1.max(piece.1),
            _ => pieces.push(piece),
        }
    }
    pieces
}

fn min_abs_angle(samples: &[(f64, f64)]) -> f64 {
    let mut m = samples.iter().map(|s| s.1.abs()).fold(f64::INFINITY, f64::min);
    for w in samples.windows(2) {
        if w[0].1.signum() != w[1].1.signum() {
            m = 0.0;
        }
    }
    m
}
