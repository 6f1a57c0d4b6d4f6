//! Gaussian beams, microlens arrays, the relay telescope, and the dual-beam
//! scheme for shifting one trap lattice against another.
//!
//! Lattice convention: lenslet (row, col) has its center at
//! `((col - (cols-1)/2)·pitch, (row - (rows-1)/2)·pitch, 0)`, i.e. the array is
//! centered on the optical axis in the plane z = 0, and its focus lies a
//! distance `focal_length` behind it at z = +focal_length.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive, Error, Result};
use crate::quadrature::DiskRule;

pub type Vec3 = Vector3<f64>;

/// Largest beam angle accepted by the paraxial dual-beam model (rad).
pub const MAX_PARAXIAL_ANGLE: f64 = 0.2;

/// Default per-lenslet quadrature order (radial × angular).
pub const DEFAULT_QUADRATURE_ORDER: usize = 32;

/// Ratio of the fitted Gaussian 1/e² radius to the Airy first-minimum radius.
pub const AIRY_TO_GAUSSIAN: f64 = 0.8;

/// TEM₀₀ beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBeam {
    /// W
    pub power: f64,
    /// w₀ at focus (m)
    pub waist: f64,
    /// m
    pub wavelength: f64,
    pub focus_position: Vec3,
    /// unit vector
    pub axis: Vec3,
}

impl GaussianBeam {
    pub fn new(power: f64, waist: f64, wavelength: f64, focus_position: Vec3, axis: Vec3) -> Result<Self> {
        let beam = GaussianBeam {
            power,
            waist,
            wavelength,
            focus_position,
            axis,
        };
        beam.validate()?;
        Ok(beam)
    }

    /// Beam focused at the origin and propagating along +z.
    pub fn along_z(power: f64, waist: f64, wavelength: f64) -> Result<Self> {
        Self::new(power, waist, wavelength, Vec3::zeros(), Vec3::z())
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("power", self.power)?;
        positive("waist", self.waist)?;
        positive("wavelength", self.wavelength)?;
        let n = self.axis.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("axis norm", n, "beam axis must be a unit vector"));
        }
        if !self.focus_position.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("focus_position", f64::NAN, "must be finite"));
        }
        Ok(())
    }

    /// z_R = π w₀² / λ
    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist * self.waist / self.wavelength
    }

    /// w(z) = w₀ √(1 + (z/z_R)²)
    pub fn radius_at(&self, z: f64) -> f64 {
        let s = z / self.rayleigh_range();
        self.waist * (1.0 + s * s).sqrt()
    }

    /// On-axis intensity at the focus, 2P/(π w₀²).
    pub fn peak_intensity(&self) -> f64 {
        2.0 * self.power / (PI * self.waist * self.waist)
    }

    /// (r², z) of `point` in beam coordinates.
    pub fn beam_coordinates(&self, point: &Vec3) -> (f64, f64) {
        let d = point - self.focus_position;
        let z = d.dot(&self.axis);
        let r2 = (d.norm_squared() - z * z).max(0.0);
        (r2, z)
    }

    pub fn intensity(&self, point: &Vec3) -> f64 {
        let (r2, z) = self.beam_coordinates(point);
        let w = self.radius_at(z);
        2.0 * self.power / (PI * w * w) * (-2.0 * r2 / (w * w)).exp()
    }
}

/// Free-function form of [`GaussianBeam::intensity`].
pub fn beam_intensity(beam: &GaussianBeam, point: &Vec3) -> f64 {
    beam.intensity(point)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LensKind {
    Refractive,
    Diffractive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LensletIndex {
    pub row: usize,
    pub col: usize,
}

impl LensletIndex {
    pub fn new(row: usize, col: usize) -> Self {
        LensletIndex { row, col }
    }
}

impl std::fmt::Display for LensletIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrolensArray {
    /// center-to-center spacing (m)
    pub pitch: f64,
    pub lens_diameter: f64,
    pub focal_length: f64,
    pub rows: usize,
    pub cols: usize,
    /// metadata only
    pub kind: LensKind,
}

impl MicrolensArray {
    pub fn new(
        pitch: f64,
        lens_diameter: f64,
        focal_length: f64,
        rows: usize,
        cols: usize,
        kind: LensKind,
    ) -> Result<Self> {
        let array = MicrolensArray {
            pitch,
            lens_diameter,
            focal_length,
            rows,
            cols,
            kind,
        };
        array.validate()?;
        Ok(array)
    }

    pub fn validate(&self) -> Result<()> {
        positive("pitch", self.pitch)?;
        positive("lens_diameter", self.lens_diameter)?;
        positive("focal_length", self.focal_length)?;
        if self.lens_diameter > self.pitch {
            return Err(Error::invalid(
                "lens_diameter",
                self.lens_diameter,
                "lenslets may not be wider than the pitch",
            ));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("rows/cols", 0.0, "array needs at least one lenslet"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// NA = sin(atan(D / 2f))
    pub fn numerical_aperture(&self) -> f64 {
        (self.lens_diameter / (2.0 * self.focal_length)).atan().sin()
    }

    /// Lenslet indices in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = LensletIndex> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| LensletIndex::new(r, c)))
    }

    pub fn contains(&self, index: LensletIndex) -> bool {
        index.row < self.rows && index.col < self.cols
    }

    /// Center of a lenslet in the array plane.
    pub fn lenslet_center(&self, index: LensletIndex) -> Vec3 {
        let x = (index.col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pitch;
        let y = (index.row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pitch;
        Vec3::new(x, y, 0.0)
    }

    /// Focus of a lenslet: on the pitch grid, `focal_length` behind the array.
    pub fn focus_position(&self, index: LensletIndex) -> Vec3 {
        self.lenslet_center(index) + Vec3::new(0.0, 0.0, self.focal_length)
    }

    pub fn focal_spot(&self, wavelength: f64) -> Result<FocalSpot> {
        FocalSpot::new(wavelength, self.numerical_aperture())
    }
}

/// Free-function form of [`MicrolensArray::numerical_aperture`].
pub fn numerical_aperture(array: &MicrolensArray) -> f64 {
    array.numerical_aperture()
}

/// Radius of the first Airy minimum, q = 0.61 λ / NA.
pub fn focal_spot_radius(wavelength: f64, na: f64) -> Result<f64> {
    positive("wavelength", wavelength)?;
    if !(na > 0.0 && na < 1.0) {
        return Err(Error::invalid("numerical aperture", na, "must lie in (0, 1)"));
    }
    Ok(0.61 * wavelength / na)
}

/// Gaussian 1/e² radius fitted to an Airy pattern of first-minimum radius `q`.
pub fn airy_to_gaussian_waist(airy_radius: f64) -> f64 {
    AIRY_TO_GAUSSIAN * airy_radius
}

/// Diffraction-limited focus of one lenslet: the Airy radius and the Gaussian
/// waist used for trap calculations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalSpot {
    pub airy_radius: f64,
    pub gaussian_waist: f64,
}

impl FocalSpot {
    pub fn new(wavelength: f64, na: f64) -> Result<Self> {
        let q = focal_spot_radius(wavelength, na)?;
        Ok(FocalSpot {
            airy_radius: q,
            gaussian_waist: airy_to_gaussian_waist(q),
        })
    }
}

/// Two-lens 4f relay imaging the focal plane of the micro-optics into the
/// vacuum chamber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayTelescope {
    pub focal_length_1: f64,
    pub focal_length_2: f64,
    pub aperture: f64,
}

impl RelayTelescope {
    pub fn new(focal_length_1: f64, focal_length_2: f64, aperture: f64) -> Result<Self> {
        positive("focal_length_1", focal_length_1)?;
        positive("focal_length_2", focal_length_2)?;
        positive("aperture", aperture)?;
        Ok(RelayTelescope {
            focal_length_1,
            focal_length_2,
            aperture,
        })
    }

    /// M = f₂ / f₁ (magnitude; the image is inverted).
    pub fn magnification(&self) -> f64 {
        self.focal_length_2 / self.focal_length_1
    }

    /// Ideal 4f image of a point given relative to the object focal plane on
    /// the optical axis: transverse coordinates scale by −M, the axial
    /// coordinate by the longitudinal magnification M².
    pub fn image_point(&self, p: &Vec3) -> Vec3 {
        let m = self.magnification();
        Vec3::new(-m * p.x, -m * p.y, m * m * p.z)
    }

    pub fn relay_image(&self, source_plane_points: &[Vec3]) -> Vec<Vec3> {
        source_plane_points.iter().map(|p| self.image_point(p)).collect()
    }
}

/// Free-function form of [`RelayTelescope::relay_image`].
pub fn relay_image(telescope: &RelayTelescope, source_plane_points: &[Vec3]) -> Vec<Vec3> {
    telescope.relay_image(source_plane_points)
}

fn check_paraxial(angle: f64) -> Result<()> {
    if !angle.is_finite() || angle.abs() > MAX_PARAXIAL_ANGLE {
        return Err(Error::invalid("beam angle", angle, "must be paraxial (|angle| <= 0.2 rad)"));
    }
    Ok(())
}

/// Lateral offset f·tan(θ) between the focal lattices of two beams crossing
/// the array at relative angle θ.
pub fn dual_beam_site_offset(array: &MicrolensArray, angle_between_beams: f64) -> Result<f64> {
    check_paraxial(angle_between_beams)?;
    Ok(array.focal_length * angle_between_beams.tan())
}

/// Beam angle that produces a requested lattice offset.
pub fn angle_for_site_offset(array: &MicrolensArray, offset: f64) -> Result<f64> {
    if !offset.is_finite() {
        return Err(Error::invalid("offset", offset, "must be finite"));
    }
    let angle = (offset / array.focal_length).atan();
    check_paraxial(angle)?;
    Ok(angle)
}

/// How the lens array is illuminated.
#[derive(Debug, Clone, PartialEq)]
pub enum Illumination {
    Gaussian(GaussianBeam),
    /// Flat field of the given intensity (W/m²) over every lenslet.
    Uniform { intensity: f64 },
}

impl Illumination {
    pub fn lenslet_powers(&self, array: &MicrolensArray, order: usize) -> Result<BTreeMap<LensletIndex, f64>> {
        match self {
            Illumination::Gaussian(beam) => lenslet_power_share_with_order(array, beam, order),
            Illumination::Uniform { intensity } => {
                non_negative("intensity", *intensity)?;
                let area = PI * array.lens_diameter * array.lens_diameter / 4.0;
                Ok(array.indices().map(|i| (i, intensity * area)).collect())
            }
        }
    }
}

/// Power collected by each lenslet aperture from `beam`, by Gauss–Legendre
/// quadrature over each aperture at the default order.
pub fn lenslet_power_share(array: &MicrolensArray, beam: &GaussianBeam) -> Result<BTreeMap<LensletIndex, f64>> {
    lenslet_power_share_with_order(array, beam, DEFAULT_QUADRATURE_ORDER)
}

pub fn lenslet_power_share_with_order(
    array: &MicrolensArray,
    beam: &GaussianBeam,
    order: usize,
) -> Result<BTreeMap<LensletIndex, f64>> {
    array.validate()?;
    beam.validate()?;
    if order == 0 {
        return Err(Error::invalid("quadrature order", 0.0, "must be >= 1"));
    }
    if (beam.axis.z.abs() - 1.0).abs() > 1e-9 {
        return Err(Error::OutOfValidity(
            "illuminating beam must propagate normal to the lens array".into(),
        ));
    }
    let rule = DiskRule::new(order, order);
    let radius = array.lens_diameter / 2.0;
    let indices: Vec<LensletIndex> = array.indices().collect();
    // Each lenslet is summed sequentially, so the parallel map is bit-identical
    // to a serial one.
    let powers: Vec<f64> = indices
        .par_iter()
        .map(|&i| {
            let c = array.lenslet_center(i);
            rule.integrate(c.x, c.y, radius, |x, y| beam.intensity(&Vec3::new(x, y, 0.0)))
        })
        .collect();
    Ok(indices.into_iter().zip(powers).collect())
}
