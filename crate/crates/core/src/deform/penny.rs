//! Uniformly pressurized horizontal circular (penny shaped) crack,
//! approximated by superposition of tensile rectangular dislocations.

use super::okada::{OkadaSource, OkadaSubtype};
use super::{okada_displacement, DisplacementField, ElasticMedium, PennyCrackSource};
use crate::error::{Error, Result};
use crate::grid::GridShape;

/// Cavity volume change of a pressurized penny crack:
/// dV = 8 (1 - nu) a^3 dP / (3 mu).
pub fn penny_equivalent_volume(src: &PennyCrackSource, medium: &ElasticMedium) -> f64 {
    8.0 * (1.0 - medium.poisson_ratio) * src.radius_m.powi(3) * src.d_pressure_pa
        / (3.0 * medium.shear_modulus_pa)
}

/// Default number of patches across the crack diameter.
pub const DEFAULT_PATCHES_ACROSS: usize = 16;

/// Surface displacement of the crack, by discretizing the disk into square
/// tensile Okada patches. Patch openings are scaled so the summed patch
/// volume equals the equivalent cavity volume exactly; this preserves the
/// far-field (Mogi-like) limit while the near field carries the usual
/// discretization error.
pub fn penny_displacement(
    src: &PennyCrackSource,
    medium: &ElasticMedium,
    grid: &GridShape,
) -> Result<DisplacementField> {
    penny_displacement_n(src, medium, grid, DEFAULT_PATCHES_ACROSS)
}

pub fn penny_displacement_n(
    src: &PennyCrackSource,
    medium: &ElasticMedium,
    grid: &GridShape,
    patches_across: usize,
) -> Result<DisplacementField> {
    if !(src.depth_m > 0.0 && src.radius_m > 0.0) {
        return Err(Error::InvalidSource("penny crack depth and radius must be positive".into()));
    }
    if src.depth_m / src.radius_m < 0.1 {
        return Err(Error::InvalidSource(format!(
            "penny crack depth/radius = {:.3} < 0.1; the patch approximation is invalid this close to the surface",
            src.depth_m / src.radius_m
        )));
    }
    let d_volume = penny_equivalent_volume(src, medium);
    let mut field = DisplacementField::zeros(grid);
    if d_volume == 0.0 {
        return Ok(field);
    }

    // square patches whose centres fall inside the disk
    let side = 2.0 * src.radius_m / patches_across as f64;
    let mut centres = Vec::new();
    for i in 0..patches_across {
        for j in 0..patches_across {
            let cx = -src.radius_m + (i as f64 + 0.5) * side;
            let cy = -src.radius_m + (j as f64 + 0.5) * side;
            if cx * cx + cy * cy <= src.radius_m * src.radius_m {
                centres.push((cx, cy));
            }
        }
    }
    let total_area = centres.len() as f64 * side * side;
    let opening = d_volume / total_area;

    for (cx, cy) in centres {
        let patch = OkadaSource {
            x_m: src.x_m + cx,
            y_m: src.y_m + cy,
            depth_m: src.depth_m,
            strike_deg: 0.0,
            dip_deg: 0.0,
            rake_deg: 0.0,
            length_m: side,
            width_m: side,
            slip_m: 0.0,
            opening_m: opening,
            subtype: OkadaSubtype::Sill,
        };
        let part = okada_displacement(&patch, medium, grid)?;
        for k in 0..grid.len() {
            field.east.values_mut()[k] += part.east.values()[k];
            field.north.values_mut()[k] += part.north.values()[k];
            field.up.values_mut()[k] += part.up.values()[k];
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::mogi_displacement;
    use crate::deform::okada::okada_point_displacement;
    use crate::deform::MogiSource;

    #[test]
    fn zero_pressure_gives_zero_field() {
        let grid = GridShape::new(16, 16, 500.0).unwrap();
        let src =
            PennyCrackSource { x_m: 0.0, y_m: 0.0, depth_m: 3e3, radius_m: 1e3, d_pressure_pa: 0.0 };
        let f = penny_displacement(&src, &ElasticMedium::crustal(), &grid).unwrap();
        assert!(f.up.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_extreme_near_surface() {
        let grid = GridShape::new(8, 8, 500.0).unwrap();
        let src =
            PennyCrackSource { x_m: 0.0, y_m: 0.0, depth_m: 100.0, radius_m: 2e3, d_pressure_pa: 1e6 };
        assert!(penny_displacement(&src, &ElasticMedium::crustal(), &grid).is_err());
    }

    #[test]
    fn radially_symmetric_within_tolerance() {
        let grid = GridShape::new(33, 33, 400.0).unwrap();
        let src =
            PennyCrackSource { x_m: 0.0, y_m: 0.0, depth_m: 4e3, radius_m: 2e3, d_pressure_pa: 1e6 };
        let f = penny_displacement(&src, &ElasticMedium::crustal(), &grid).unwrap();
        // same radius, different azimuths (grid centre is (16,16))
        let c = 16usize;
        let r = 10usize;
        let samples =
            [f.up.get(c, c + r), f.up.get(c, c - r), f.up.get(c + r, c), f.up.get(c - r, c)];
        let mean = samples.iter().sum::<f64>() / 4.0;
        for s in samples {
            assert!((s - mean).abs() / mean.abs() < 0.01, "asymmetry: {samples:?}");
        }
    }

    #[test]
    fn far_field_matches_tensile_point_source() {
        // deep, small crack: depth/radius = 10, so the whole crack acts as a
        // single horizontal tensile point source of the same volume change
        let grid = GridShape::new(32, 32, 1000.0).unwrap();
        let medium = ElasticMedium::crustal();
        let src =
            PennyCrackSource { x_m: 0.0, y_m: 0.0, depth_m: 5e3, radius_m: 0.25e3, d_pressure_pa: 5e7 };
        let f = penny_displacement(&src, &medium, &grid).unwrap();
        let dv = penny_equivalent_volume(&src, &medium);
        let mut max_abs = 0.0f64;
        let mut point = Vec::with_capacity(grid.len());
        for row in 0..grid.height {
            for col in 0..grid.width {
                let p = okada_point_displacement(
                    &medium,
                    0.0,
                    0.0,
                    src.depth_m,
                    0.0,
                    0.0,
                    dv,
                    grid.x_of_col(col),
                    grid.y_of_row(row),
                );
                max_abs = max_abs.max(p[2].abs());
                point.push(p);
            }
        }
        for (i, p) in point.iter().enumerate() {
            let got = [f.east.values()[i], f.north.values()[i], f.up.values()[i]];
            for k in 0..3 {
                let d = (got[k] - p[k]).abs();
                assert!(
                    d / p[k].abs().max(0.01 * max_abs) < 0.02,
                    "component {k} mismatch at {i}: {} vs {}",
                    got[k],
                    p[k]
                );
            }
        }
    }

    #[test]
    fn centre_uplift_is_twice_equivalent_mogi() {
        // A shallow horizontal tensile point source concentrates uplift above
        // it: peak uz = 3 dV / (2 pi d^2), exactly twice the isotropic
        // centre-of-dilatation value (1 - nu) dV / (pi d^2) at nu = 0.25.
        let grid = GridShape::new(33, 33, 500.0).unwrap();
        let medium = ElasticMedium::crustal();
        let src =
            PennyCrackSource { x_m: 0.0, y_m: 0.0, depth_m: 5e3, radius_m: 0.25e3, d_pressure_pa: 5e7 };
        let f = penny_displacement(&src, &medium, &grid).unwrap();
        let dv = penny_equivalent_volume(&src, &medium);
        let mogi =
            mogi_displacement(&MogiSource { x_m: 0.0, y_m: 0.0, depth_m: 5e3, d_volume_m3: dv }, &medium, &grid)
                .unwrap();
        let ratio = f.up.get(16, 16) / mogi.up.get(16, 16);
        assert!((ratio - 2.0).abs() < 0.02, "centre uz ratio = {ratio}");
    }

    #[test]
    fn converges_with_patch_refinement() {
        let grid = GridShape::new(16, 16, 800.0).unwrap();
        let medium = ElasticMedium::crustal();
        let src =
            PennyCrackSource { x_m: 0.0, y_m: 0.0, depth_m: 3e3, radius_m: 2e3, d_pressure_pa: 1e6 };
        let coarse = penny_displacement_n(&src, &medium, &grid, 16).unwrap();
        let fine = penny_displacement_n(&src, &medium, &grid, 32).unwrap();
        let peak = fine.up.values().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for i in 0..grid.len() {
            let d = (coarse.up.values()[i] - fine.up.values()[i]).abs();
            assert!(d / peak < 0.01, "patch refinement changed uz by {}", d / peak);
        }
    }
}
