//! Atmospheric correction of unwrapped interferograms: harmonic inpainting
//! of incoherent holes, then subtraction of the zenith-delay difference
//! projected into the line of sight.

use crate::atmos::{stratified_from_ztd, StratifiedModel};
use crate::error::{Error, Result};
use crate::grid::{LosGeometry, Raster, Unit};

/// A raster with a validity mask (`false` marks incoherent/missing pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedRaster {
    raster: Raster,
    valid: Vec<bool>,
}

impl MaskedRaster {
    pub fn new(raster: Raster, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != raster.values().len() {
            return Err(Error::GridMismatch(format!(
                "mask has {} entries for a raster of {} pixels",
                valid.len(),
                raster.values().len()
            )));
        }
        Ok(MaskedRaster { raster, valid })
    }

    /// Wrap a raster with every pixel valid.
    pub fn fully_valid(raster: Raster) -> Self {
        let n = raster.values().len();
        MaskedRaster { raster, valid: vec![true; n] }
    }

    /// Mask from a raster: pixels equal to `missing` (or non-finite) are
    /// treated as holes.
    pub fn from_sentinel(raster: Raster, missing: f64) -> Self {
        let valid = raster.values().iter().map(|&v| v.is_finite() && v != missing).collect();
        MaskedRaster { raster, valid }
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn n_missing(&self) -> usize {
        self.valid.iter().filter(|&&v| !v).count()
    }
}

/// Solver settings for [`laplacian_inpaint`].
#[derive(Debug, Clone, Copy)]
pub struct InpaintConfig {
    /// Successive over-relaxation factor.
    pub omega: f64,
    /// Convergence: max update < `tol_scale` x (valid value range).
    pub tol_scale: f64,
    pub max_iters: usize,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        InpaintConfig { omega: 1.9, tol_scale: 1e-6, max_iters: 100_000 }
    }
}

/// Replace missing pixels by the discrete harmonic extension of the valid
/// data: five-point Laplacian zero inside holes, Dirichlet data from valid
/// neighbors, Gauss-Seidel sweeps with successive over-relaxation. Valid
/// pixels are returned untouched.
pub fn laplacian_inpaint(img: &MaskedRaster, cfg: &InpaintConfig) -> Result<Raster> {
    let r = img.raster();
    let (w, h) = (r.width(), r.height());
    let n_valid = img.valid().iter().filter(|&&v| v).count();
    if n_valid == 0 {
        return Err(Error::Inpaint("every pixel is missing; no boundary data".into()));
    }
    if img.n_missing() == 0 {
        return Ok(r.clone());
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut mean = 0.0;
    for (i, &v) in r.values().iter().enumerate() {
        if img.valid()[i] {
            lo = lo.min(v);
            hi = hi.max(v);
            mean += v;
        }
    }
    mean /= n_valid as f64;
    let range = (hi - lo).max(f64::MIN_POSITIVE);
    let tol = cfg.tol_scale * range;

    let mut values: Vec<f64> = r
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| if img.valid()[i] { v } else { mean })
        .collect();
    let holes: Vec<usize> =
        (0..values.len()).filter(|&i| !img.valid()[i]).collect();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let mut max_update = 0.0f64;
        for &i in &holes {
            let (row, col) = (i / w, i % w);
            let mut sum = 0.0;
            let mut count = 0.0;
            if row > 0 {
                sum += values[i - w];
                count += 1.0;
            }
            if row + 1 < h {
                sum += values[i + w];
                count += 1.0;
            }
            if col > 0 {
                sum += values[i - 1];
                count += 1.0;
            }
            if col + 1 < w {
                sum += values[i + 1];
                count += 1.0;
            }
            let target = sum / count;
            let updated = values[i] + cfg.omega * (target - values[i]);
            max_update = max_update.max((updated - values[i]).abs());
            values[i] = updated;
        }
        if max_update < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Inpaint(format!(
            "solver did not converge within {} sweeps",
            cfg.max_iters
        )));
    }
    r.with_values(r.unit(), values)
}

/// Correct an unwrapped interferogram with a zenith-delay pair:
/// `inpaint(unwrapped) - los_projection(ztd_slave - ztd_master)`.
/// Output is unwrapped phase, ready for re-wrapping and re-detection.
pub fn apply_correction(
    unwrapped: &MaskedRaster,
    ztd_master: &Raster,
    ztd_slave: &Raster,
    geom: &LosGeometry,
    cfg: &InpaintConfig,
) -> Result<Raster> {
    unwrapped.raster().expect_unit(Unit::PhaseRad)?;
    if !unwrapped.raster().same_grid(ztd_master) || !unwrapped.raster().same_grid(ztd_slave) {
        return Err(Error::GridMismatch(
            "interferogram and zenith-delay maps must share a grid".into(),
        ));
    }
    let filled = laplacian_inpaint(unwrapped, cfg)?;
    let atmo = stratified_from_ztd(
        &StratifiedModel::ZtdPair { ztd_master: ztd_master.clone(), ztd_slave: ztd_slave.clone() },
        geom,
    )?;
    let values = filled
        .values()
        .iter()
        .zip(atmo.values())
        .map(|(&p, &a)| p - a)
        .collect();
    filled.with_values(Unit::PhaseRad, values)
}
