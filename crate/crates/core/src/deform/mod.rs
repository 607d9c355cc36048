//! Analytic elastic half-space surface-displacement forward models and
//! Monte Carlo source sampling, rendered to LOS phase rasters.

mod mogi;
mod okada;
mod penny;

pub use mogi::mogi_displacement;
pub use okada::{okada_displacement, okada_displacement_at, okada_point_displacement, OkadaSource, OkadaSubtype};
pub use penny::{penny_displacement, penny_equivalent_volume};

use crate::error::{Error, Result};
use crate::grid::{displacement_to_phase, GridShape, LosGeometry, Raster, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Elastic medium constants for the half-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticMedium {
    pub poisson_ratio: f64,
    pub shear_modulus_pa: f64,
}

impl ElasticMedium {
    pub fn new(poisson_ratio: f64, shear_modulus_pa: f64) -> Result<Self> {
        if !(poisson_ratio > 0.0 && poisson_ratio < 0.5) {
            return Err(Error::InvalidSource(format!("poisson ratio {poisson_ratio} outside (0, 0.5)")));
        }
        if !(shear_modulus_pa > 0.0) {
            return Err(Error::InvalidSource("shear modulus must be positive".into()));
        }
        Ok(ElasticMedium { poisson_ratio, shear_modulus_pa })
    }

    /// Standard crustal values: nu = 0.25, mu = 32 GPa.
    pub fn crustal() -> Self {
        ElasticMedium { poisson_ratio: 0.25, shear_modulus_pa: 3.2e10 }
    }
}

impl Default for ElasticMedium {
    fn default() -> Self {
        ElasticMedium::crustal()
    }
}

/// Point pressure source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MogiSource {
    /// East offset of the source from the grid centre, metres.
    pub x_m: f64,
    /// North offset, metres.
    pub y_m: f64,
    pub depth_m: f64,
    /// Volume change, m^3; negative for deflation.
    pub d_volume_m3: f64,
}

/// Uniformly pressurized horizontal circular crack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PennyCrackSource {
    pub x_m: f64,
    pub y_m: f64,
    pub depth_m: f64,
    pub radius_m: f64,
    /// Pressure change, Pa; negative for deflation.
    pub d_pressure_pa: f64,
}

/// Tagged union of the deformation source parameterizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceModel {
    Mogi(MogiSource),
    PennyCrack(PennyCrackSource),
    Okada(OkadaSource),
}

impl SourceModel {
    /// Horizontal (east, north) position of the source centre in metres.
    pub fn position_m(&self) -> (f64, f64) {
        match self {
            SourceModel::Mogi(m) => (m.x_m, m.y_m),
            SourceModel::PennyCrack(p) => (p.x_m, p.y_m),
            SourceModel::Okada(o) => (o.x_m, o.y_m),
        }
    }

    pub fn kind(&self) -> SourceKind {
        match self {
            SourceModel::Mogi(_) => SourceKind::Mogi,
            SourceModel::PennyCrack(_) => SourceKind::Penny,
            SourceModel::Okada(o) => match o.subtype {
                OkadaSubtype::Earthquake => SourceKind::Earthquake,
                OkadaSubtype::Dyke => SourceKind::Dyke,
                OkadaSubtype::Sill => SourceKind::Sill,
            },
        }
    }
}

/// The five Monte Carlo source categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Mogi,
    Penny,
    Earthquake,
    Dyke,
    Sill,
}

impl SourceKind {
    pub const ALL: [SourceKind; 5] = [
        SourceKind::Mogi,
        SourceKind::Penny,
        SourceKind::Earthquake,
        SourceKind::Dyke,
        SourceKind::Sill,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SourceKind::Mogi => "mogi",
            SourceKind::Penny => "penny",
            SourceKind::Earthquake => "earthquake",
            SourceKind::Dyke => "dyke",
            SourceKind::Sill => "sill",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidSource(format!("unknown source kind `{s}`")))
    }
}

/// East, north and up displacement rasters on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub east: Raster,
    pub north: Raster,
    pub up: Raster,
}

impl DisplacementField {
    pub fn zeros(grid: &GridShape) -> Self {
        DisplacementField {
            east: grid.zeros(Unit::DisplacementM),
            north: grid.zeros(Unit::DisplacementM),
            up: grid.zeros(Unit::DisplacementM),
        }
    }

    /// Project onto a LOS unit vector, producing LOS displacement in metres.
    pub fn project_los(&self, geom: &LosGeometry) -> Result<Raster> {
        let v = geom.los_unit_vector();
        let values = self
            .east
            .values()
            .iter()
            .zip(self.north.values())
            .zip(self.up.values())
            .map(|((&e, &n), &u)| e * v[0] + n * v[1] + u * v[2])
            .collect();
        self.east.with_values(Unit::DisplacementM, values)
    }
}

/// Dispatch a source model to its forward model.
pub fn surface_displacement(
    src: &SourceModel,
    medium: &ElasticMedium,
    grid: &GridShape,
) -> Result<DisplacementField> {
    match src {
        SourceModel::Mogi(m) => mogi_displacement(m, medium, grid),
        SourceModel::PennyCrack(p) => penny_displacement(p, medium, grid),
        SourceModel::Okada(o) => okada_displacement(o, medium, grid),
    }
}

/// Render a source to unwrapped LOS phase (the D component).
pub fn render_deformation(
    src: &SourceModel,
    medium: &ElasticMedium,
    geom: &LosGeometry,
    grid: &GridShape,
) -> Result<Raster> {
    let field = surface_displacement(src, medium, grid)?;
    let los = field.project_los(geom)?;
    displacement_to_phase(&los, geom)
}

fn log_uniform(rng: &mut impl Rng, lo_log10: f64, hi_log10: f64) -> f64 {
    10f64.powf(rng.gen_range(lo_log10..hi_log10))
}

/// Draw a source and a viewing geometry from the Monte Carlo parameter ranges.
///
/// Positions are placed within the central half of the grid extent so the
/// source footprint stays inside the raster. Signed quantities (volume,
/// pressure) are inflation or deflation with equal probability and
/// log-uniform magnitude over two decades.
pub fn sample_source(seed: u64, kind: SourceKind, grid: &GridShape) -> (SourceModel, LosGeometry) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hx, hy) = grid.half_extent_m();
    let x = rng.gen_range(-hx / 2.0..hx / 2.0);
    let y = rng.gen_range(-hy / 2.0..hy / 2.0);
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };

    let src = match kind {
        SourceKind::Mogi => SourceModel::Mogi(MogiSource {
            x_m: x,
            y_m: y,
            depth_m: rng.gen_range(1e3..10e3),
            d_volume_m3: sign * log_uniform(&mut rng, 5.0, 7.0),
        }),
        SourceKind::Penny => {
            let depth = rng.gen_range(0.5e3..6e3);
            // keep the discretized-crack approximation valid (depth/radius >= 0.1)
            let max_radius = f64::min(depth / 0.1, 6e3);
            let radius = rng.gen_range(0.5e3..max_radius.max(0.5e3 + 1.0));
            SourceModel::PennyCrack(PennyCrackSource {
                x_m: x,
                y_m: y,
                depth_m: depth,
                radius_m: radius,
                d_pressure_pa: sign * log_uniform(&mut rng, 5.0, 7.0),
            })
        }
        SourceKind::Earthquake => {
            let length = rng.gen_range(0.5e3..10e3);
            SourceModel::Okada(OkadaSource {
                x_m: x,
                y_m: y,
                depth_m: rng.gen_range(1e3..15e3),
                strike_deg: rng.gen_range(0.0..360.0),
                dip_deg: rng.gen_range(45.0..90.0),
                rake_deg: rng.gen_range(0.0..360.0),
                length_m: length,
                width_m: length * rng.gen_range(0.5..1.0),
                slip_m: rng.gen_range(0.5..2.0),
                opening_m: 0.0,
                subtype: OkadaSubtype::Earthquake,
            })
        }
        SourceKind::Dyke => {
            let length = rng.gen_range(2e3..8e3);
            SourceModel::Okada(OkadaSource {
                x_m: x,
                y_m: y,
                depth_m: rng.gen_range(1e3..5e3),
                strike_deg: rng.gen_range(0.0..360.0),
                dip_deg: rng.gen_range(45.0..90.0),
                rake_deg: 0.0,
                length_m: length,
                width_m: length * rng.gen_range(0.5..1.0),
                slip_m: 0.0,
                opening_m: rng.gen_range(0.1..1.0),
                subtype: OkadaSubtype::Dyke,
            })
        }
        SourceKind::Sill => {
            let length = rng.gen_range(1e3..5e3);
            SourceModel::Okada(OkadaSource {
                x_m: x,
                y_m: y,
                depth_m: rng.gen_range(1e3..6e3),
                strike_deg: rng.gen_range(0.0..360.0),
                dip_deg: rng.gen_range(0.0..10.0),
                rake_deg: 0.0,
                length_m: length,
                width_m: length * rng.gen_range(0.5..1.0),
                slip_m: 0.0,
                opening_m: rng.gen_range(0.1..1.0),
                subtype: OkadaSubtype::Sill,
            })
        }
    };

    let geom = LosGeometry::new(rng.gen_range(0.0..45.0), rng.gen_range(0.0..360.0))
        .expect("sampled within valid ranges");
    (src, geom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_grid() -> GridShape {
        GridShape::new(64, 64, 555.0).unwrap()
    }

    #[test]
    fn sample_source_is_deterministic() {
        let g = test_grid();
        for kind in SourceKind::ALL {
            let a = sample_source(42, kind, &g);
            let b = sample_source(42, kind, &g);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mogi_depths_within_paper_range() {
        let g = test_grid();
        for seed in 0..10_000u64 {
            if let (SourceModel::Mogi(m), _) = sample_source(seed, SourceKind::Mogi, &g) {
                assert!(m.depth_m >= 1e3 && m.depth_m <= 10e3, "depth {}", m.depth_m);
            } else {
                panic!("expected mogi");
            }
        }
    }

    #[test]
    fn log_volume_is_uniform_over_two_decades() {
        // Kolmogorov-Smirnov statistic of log10|dV| against uniform[5, 7]
        let g = test_grid();
        let mut logs: Vec<f64> = (0..10_000u64)
            .map(|seed| match sample_source(seed, SourceKind::Mogi, &g).0 {
                SourceModel::Mogi(m) => m.d_volume_m3.abs().log10(),
                _ => unreachable!(),
            })
            .collect();
        logs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = logs.len() as f64;
        let mut ks = 0.0f64;
        for (i, &v) in logs.iter().enumerate() {
            let cdf = ((v - 5.0) / 2.0).clamp(0.0, 1.0);
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            ks = ks.max((cdf - lo).abs()).max((cdf - hi).abs());
        }
        assert!(ks < 0.02, "KS statistic {ks} too large");
    }

    #[test]
    fn render_zero_source_is_zero() {
        let g = test_grid();
        let src = SourceModel::Mogi(MogiSource { x_m: 0.0, y_m: 0.0, depth_m: 3e3, d_volume_m3: 0.0 });
        let geom = LosGeometry::new(30.0, 10.0).unwrap();
        let phase = render_deformation(&src, &ElasticMedium::crustal(), &geom, &g).unwrap();
        assert!(phase.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn render_mogi_at_nadir_is_radially_symmetric_vertical_phase() {
        let g = GridShape::new(65, 65, 500.0).unwrap();
        let src = MogiSource { x_m: 0.0, y_m: 0.0, depth_m: 3e3, d_volume_m3: 1e6 };
        let geom = LosGeometry::new(0.0, 0.0).unwrap();
        let phase =
            render_deformation(&SourceModel::Mogi(src), &ElasticMedium::crustal(), &geom, &g).unwrap();
        let field = mogi_displacement(&src, &ElasticMedium::crustal(), &g).unwrap();
        for i in 0..g.len() {
            let expected = geom.phase_per_meter() * field.up.values()[i];
            assert!((phase.values()[i] - expected).abs() < 1e-12);
        }
        // symmetry across the centre
        let c = 32;
        for off in 1..30usize {
            let a = phase.get(c, c + off);
            let b = phase.get(c, c - off);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn opposing_headings_mirror_east_component() {
        let g = GridShape::new(32, 32, 555.0).unwrap();
        let src = MogiSource { x_m: 0.0, y_m: 0.0, depth_m: 3e3, d_volume_m3: 1e6 };
        let medium = ElasticMedium::crustal();
        let field = mogi_displacement(&src, &medium, &g).unwrap();
        let geo_a = LosGeometry::new(40.0, 0.0).unwrap();
        let geo_b = LosGeometry::new(40.0, 180.0).unwrap();
        let va = geo_a.los_unit_vector();
        let vb = geo_b.los_unit_vector();
        // heading flip mirrors the horizontal look components
        assert!((va[0] + vb[0]).abs() < 1e-12);
        assert!((va[1] + vb[1]).abs() < 1e-12);
        assert!((va[2] - vb[2]).abs() < 1e-12);
        let pa = field.project_los(&geo_a).unwrap();
        let pb = field.project_los(&geo_b).unwrap();
        // difference is twice the horizontal contribution; check via up component
        for i in 0..g.len() {
            let sum = pa.values()[i] + pb.values()[i];
            let up_term = 2.0 * field.up.values()[i] * va[2];
            assert!((sum - up_term).abs() < 1e-12);
        }
    }
}
