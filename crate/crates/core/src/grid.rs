//! Rasters, viewing geometry, phase-unit conversions, wrapping and grayscale
//! quantization shared by every other module.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Sentinel-1 C-band wavelength in metres; one fringe corresponds to half of it.
pub const DEFAULT_WAVELENGTH_M: f64 = 0.05546;

/// Physical meaning of the samples in a [`Raster`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    DisplacementM,
    PhaseRad,
    DelayMm,
    ElevationM,
    GrayU8,
    Probability,
}

impl Unit {
    pub fn code(self) -> u16 {
        match self {
            Unit::DisplacementM => 0,
            Unit::PhaseRad => 1,
            Unit::DelayMm => 2,
            Unit::ElevationM => 3,
            Unit::GrayU8 => 4,
            Unit::Probability => 5,
        }
    }

    pub fn from_code(code: u16) -> Result<Self> {
        Ok(match code {
            0 => Unit::DisplacementM,
            1 => Unit::PhaseRad,
            2 => Unit::DelayMm,
            3 => Unit::ElevationM,
            4 => Unit::GrayU8,
            5 => Unit::Probability,
            other => return Err(Error::Format(format!("unknown unit code {other}"))),
        })
    }
}

/// A rectangular grid of scalar samples with physical pixel spacing.
///
/// Values are stored row-major; row 0 is the northernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    spacing_m: f64,
    unit: Unit,
    values: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, spacing_m: f64, unit: Unit, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster("width and height must be positive".into()));
        }
        if !(spacing_m > 0.0) {
            return Err(Error::InvalidRaster("spacing must be positive".into()));
        }
        if values.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "value count {} does not match {width}x{height}",
                values.len()
            )));
        }
        let r = Raster { width, height, spacing_m, unit, values };
        r.check_unit_domain()?;
        Ok(r)
    }

    pub fn zeros(width: usize, height: usize, spacing_m: f64, unit: Unit) -> Result<Self> {
        Self::new(width, height, spacing_m, unit, vec![0.0; width * height])
    }

    fn check_unit_domain(&self) -> Result<()> {
        match self.unit {
            Unit::GrayU8 => {
                for (i, &v) in self.values.iter().enumerate() {
                    if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                        return Err(Error::OutOfRange(format!(
                            "gray_u8 value {v} at index {i} not an integer in [0, 255]"
                        )));
                    }
                }
            }
            Unit::Probability => {
                for (i, &v) in self.values.iter().enumerate() {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::OutOfRange(format!(
                            "probability value {v} at index {i} outside [0, 1]"
                        )));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing_m(&self) -> f64 {
        self.spacing_m
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }

    pub fn same_grid(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height && self.spacing_m == other.spacing_m
    }

    pub fn expect_unit(&self, unit: Unit) -> Result<()> {
        if self.unit != unit {
            return Err(Error::UnitMismatch { expected: unit, got: self.unit });
        }
        Ok(())
    }

    /// Rebuild with the same grid but different unit/values.
    pub fn with_values(&self, unit: Unit, values: Vec<f64>) -> Result<Raster> {
        Raster::new(self.width, self.height, self.spacing_m, unit, values)
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.values {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Grid dimensions and spacing without values; the target shape for forward
/// models and synthesizers. Coordinates are metres from the grid centre,
/// x east (columns increasing) and y north (rows decreasing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
    pub spacing_m: f64,
}

impl GridShape {
    pub fn new(width: usize, height: usize, spacing_m: f64) -> Result<Self> {
        if width == 0 || height == 0 || !(spacing_m > 0.0) {
            return Err(Error::InvalidRaster("grid shape must have positive dimensions and spacing".into()));
        }
        Ok(GridShape { width, height, spacing_m })
    }

    pub fn of(raster: &Raster) -> Self {
        GridShape {
            width: raster.width(),
            height: raster.height(),
            spacing_m: raster.spacing_m(),
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// East coordinate of a column, metres from grid centre.
    pub fn x_of_col(&self, col: usize) -> f64 {
        (col as f64 - (self.width as f64 - 1.0) / 2.0) * self.spacing_m
    }

    /// North coordinate of a row, metres from grid centre.
    pub fn y_of_row(&self, row: usize) -> f64 {
        ((self.height as f64 - 1.0) / 2.0 - row as f64) * self.spacing_m
    }

    pub fn zeros(&self, unit: Unit) -> Raster {
        Raster::new(self.width, self.height, self.spacing_m, unit, vec![0.0; self.len()])
            .expect("valid by construction")
    }

    /// Half-extents (east, north) of the grid in metres.
    pub fn half_extent_m(&self) -> (f64, f64) {
        (
            (self.width as f64 - 1.0) / 2.0 * self.spacing_m,
            (self.height as f64 - 1.0) / 2.0 * self.spacing_m,
        )
    }
}

/// Line-of-sight viewing geometry: incidence from vertical, heading clockwise
/// from north. Right-looking sensor, so the look azimuth is heading + 90°.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosGeometry {
    incidence_deg: f64,
    heading_deg: f64,
    wavelength_m: f64,
}

impl LosGeometry {
    pub fn new(incidence_deg: f64, heading_deg: f64) -> Result<Self> {
        Self::with_wavelength(incidence_deg, heading_deg, DEFAULT_WAVELENGTH_M)
    }

    pub fn with_wavelength(incidence_deg: f64, heading_deg: f64, wavelength_m: f64) -> Result<Self> {
        if !(0.0..=45.0).contains(&incidence_deg) {
            return Err(Error::InvalidGeometry(format!(
                "incidence {incidence_deg} outside [0, 45] degrees"
            )));
        }
        if !(0.0..360.0).contains(&heading_deg) {
            return Err(Error::InvalidGeometry(format!(
                "heading {heading_deg} outside [0, 360) degrees"
            )));
        }
        if !(wavelength_m > 0.0) {
            return Err(Error::InvalidGeometry("wavelength must be positive".into()));
        }
        Ok(LosGeometry { incidence_deg, heading_deg, wavelength_m })
    }

    pub fn incidence_deg(&self) -> f64 {
        self.incidence_deg
    }

    pub fn heading_deg(&self) -> f64 {
        self.heading_deg
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_m
    }

    /// Unit vector from ground towards the satellite, as (east, north, up).
    pub fn los_unit_vector(&self) -> [f64; 3] {
        let theta = self.incidence_deg.to_radians();
        // Right-looking: look azimuth = heading + 90, clockwise from north.
        let look_az = (self.heading_deg + 90.0).to_radians();
        [
            theta.sin() * look_az.sin(),
            theta.sin() * look_az.cos(),
            theta.cos(),
        ]
    }

    /// Radians of phase per metre of LOS displacement (negative towards satellite).
    pub fn phase_per_meter(&self) -> f64 {
        -4.0 * PI / self.wavelength_m
    }

    /// Radians of phase per millimetre of one-way delay.
    pub fn phase_per_mm_delay(&self) -> f64 {
        -4.0 * PI / (self.wavelength_m * 1000.0)
    }
}

/// Convert LOS displacement (metres) to interferometric phase (radians),
/// phase = -(4π/λ) u_los. Motion toward the satellite gives negative phase.
pub fn displacement_to_phase(u_los: &Raster, geom: &LosGeometry) -> Result<Raster> {
    u_los.expect_unit(Unit::DisplacementM)?;
    let k = geom.phase_per_meter();
    let values = u_los.values().iter().map(|&u| k * u).collect();
    u_los.with_values(Unit::PhaseRad, values)
}

/// Wrap a single phase value to the principal interval [-π, π).
pub fn wrap_value(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = (x + PI).rem_euclid(two_pi) - PI;
    // rem_euclid can return exactly two_pi due to rounding near the boundary
    if w >= PI {
        w -= two_pi;
    }
    w
}

/// Wrap every phase value to [-π, π).
pub fn wrap_phase(phase: &Raster) -> Result<Raster> {
    phase.expect_unit(Unit::PhaseRad)?;
    let mut values = Vec::with_capacity(phase.values().len());
    for (i, &x) in phase.values().iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite { row: i / phase.width(), col: i % phase.width() });
        }
        values.push(wrap_value(x));
    }
    phase.with_values(Unit::PhaseRad, values)
}

/// Map wrapped phase in [-π, π) to integral gray levels in [0, 255].
///
/// `zero_centered` is a labelling flag recorded in dataset manifests (the
/// subtraction of 128 happens at model-input normalization); stored values
/// are always in [0, 255].
pub fn quantize_grayscale(wrapped: &Raster, _zero_centered: bool) -> Result<Raster> {
    wrapped.expect_unit(Unit::PhaseRad)?;
    let mut values = Vec::with_capacity(wrapped.values().len());
    for (i, &x) in wrapped.values().iter().enumerate() {
        if !(-PI..PI).contains(&x) {
            return Err(Error::OutOfRange(format!(
                "phase {x} at index {i} outside the principal interval [-pi, pi)"
            )));
        }
        // round half-up, deterministic across platforms
        let g = ((x + PI) / (2.0 * PI) * 255.0 + 0.5).floor();
        values.push(g.clamp(0.0, 255.0));
    }
    wrapped.with_values(Unit::GrayU8, values)
}

/// Inverse of [`quantize_grayscale`] up to quantization error: map gray
/// levels back to wrapped phase in [-pi, pi).
pub fn gray_to_phase(gray: &Raster) -> Result<Raster> {
    gray.expect_unit(Unit::GrayU8)?;
    let values = gray
        .values()
        .iter()
        .map(|&g| g / 255.0 * 2.0 * PI - PI)
        .collect();
    gray.with_values(Unit::PhaseRad, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nadir_look_vector_is_up() {
        let g = LosGeometry::new(0.0, 123.0).unwrap();
        let v = g.los_unit_vector();
        assert!((v[0]).abs() < 1e-12 && (v[1]).abs() < 1e-12);
        assert!((v[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn east_looking_45() {
        // look azimuth 90 (east) means heading 0
        let g = LosGeometry::new(45.0, 0.0).unwrap();
        let v = g.los_unit_vector();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - s).abs() < 1e-12);
        assert!(v[1].abs() < 1e-12);
        assert!((v[2] - s).abs() < 1e-12);
    }

    #[test]
    fn half_wavelength_is_one_fringe() {
        let g = LosGeometry::new(30.0, 10.0).unwrap();
        let u = Raster::new(2, 1, 100.0, Unit::DisplacementM, vec![0.0, g.wavelength_m() / 2.0]).unwrap();
        let p = displacement_to_phase(&u, &g).unwrap();
        assert_eq!(p.values()[0], 0.0);
        assert!((p.values()[1].abs() - 2.0 * PI).abs() < 1e-12);
        // quarter wavelength -> pi, by linearity
        let u2 = Raster::new(1, 1, 100.0, Unit::DisplacementM, vec![g.wavelength_m() / 4.0]).unwrap();
        let p2 = displacement_to_phase(&u2, &g).unwrap();
        assert!((p2.values()[0].abs() - PI).abs() < 1e-12);
    }

    #[test]
    fn displacement_to_phase_rejects_wrong_unit() {
        let g = LosGeometry::new(30.0, 10.0).unwrap();
        let u = Raster::new(1, 1, 100.0, Unit::PhaseRad, vec![0.1]).unwrap();
        assert!(displacement_to_phase(&u, &g).is_err());
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_value(0.0), 0.0);
        assert!((wrap_value(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_value(1.234), 1.234); // already principal
    }

    #[test]
    fn wrap_rejects_non_finite() {
        let r = Raster::new(2, 1, 1.0, Unit::PhaseRad, vec![0.0, f64::NAN]).unwrap();
        match wrap_phase(&r) {
            Err(Error::NonFinite { row: 0, col: 1 }) => {}
            other => panic!("expected NonFinite(0,1), got {other:?}"),
        }
    }

    #[test]
    fn quantize_bounds_and_midpoint() {
        let r = Raster::new(3, 1, 1.0, Unit::PhaseRad, vec![-PI, PI - 1e-9, 0.0]).unwrap();
        let g = quantize_grayscale(&r, false).unwrap();
        assert_eq!(g.values(), &[0.0, 255.0, 128.0]);
        assert_eq!(g.unit(), Unit::GrayU8);
    }

    #[test]
    fn quantize_rejects_out_of_interval() {
        let r = Raster::new(1, 1, 1.0, Unit::PhaseRad, vec![PI]).unwrap();
        assert!(quantize_grayscale(&r, false).is_err());
    }

    #[test]
    fn raster_invariants_enforced() {
        assert!(Raster::new(0, 2, 1.0, Unit::PhaseRad, vec![]).is_err());
        assert!(Raster::new(2, 2, -1.0, Unit::PhaseRad, vec![0.0; 4]).is_err());
        assert!(Raster::new(2, 2, 1.0, Unit::PhaseRad, vec![0.0; 3]).is_err());
        assert!(Raster::new(1, 1, 1.0, Unit::GrayU8, vec![255.5]).is_err());
        assert!(Raster::new(1, 1, 1.0, Unit::Probability, vec![1.5]).is_err());
    }

    proptest! {
        #[test]
        fn los_vector_is_unit(inc in 0.0..45.0f64, head in 0.0..360.0f64) {
            let g = LosGeometry::new(inc, head).unwrap();
            let v = g.los_unit_vector();
            let n = (v[0]*v[0] + v[1]*v[1] + v[2]*v[2]).sqrt();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn wrap_is_idempotent_and_periodic(x in -1e3..1e3f64, k in -100i64..100) {
            let w = wrap_value(x);
            prop_assert!((-PI..PI).contains(&w));
            prop_assert_eq!(wrap_value(w), w);
            let shifted = wrap_value(x + 2.0 * PI * k as f64);
            let d = wrap_value(shifted - w).abs();
            prop_assert!(d < 1e-9, "periodicity violated: {}", d);
        }

        #[test]
        fn quantize_is_monotone(a in -PI..PI, b in -PI..PI) {
            prop_assume!(a < PI && b < PI);
            let r = Raster::new(2, 1, 1.0, Unit::PhaseRad, vec![a.min(b), a.max(b)]).unwrap();
            let g = quantize_grayscale(&r, false).unwrap();
            prop_assert!(g.values()[0] <= g.values()[1]);
        }
    }
}
