//! PNG rendering of rasters: cyclic color for wrapped phase, grayscale for
//! quantized patches, and probability maps with level-set overlays.

use crate::detect::ProbabilityMap;
use crate::error::Result;
use crate::grid::{wrap_phase, Raster, Unit};
use image::{Rgb, RgbImage};
use std::f64::consts::PI;
use std::path::Path;

/// Hue in [0, 360) with full saturation/value to RGB.
fn hue_to_rgb(h: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

/// Render any raster to PNG. Phase uses a cyclic color wheel (wrapping
/// first if needed), gray patches map 1:1, and any other unit is scaled
/// linearly across its range.
pub fn save_png(raster: &Raster, path: &Path) -> Result<()> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let mut img = RgbImage::new(w, h);
    match raster.unit() {
        Unit::PhaseRad => {
            let wrapped = wrap_phase(raster)?;
            for (i, &v) in wrapped.values().iter().enumerate() {
                let hue = (v + PI) / (2.0 * PI) * 360.0;
                img.put_pixel(i as u32 % w, i as u32 / w, Rgb(hue_to_rgb(hue)));
            }
        }
        Unit::GrayU8 => {
            for (i, &v) in raster.values().iter().enumerate() {
                let g = v.clamp(0.0, 255.0) as u8;
                img.put_pixel(i as u32 % w, i as u32 / w, Rgb([g, g, g]));
            }
        }
        _ => {
            let (lo, hi) = raster.min_max();
            let span = (hi - lo).max(f64::MIN_POSITIVE);
            for (i, &v) in raster.values().iter().enumerate() {
                let g = (((v - lo) / span) * 255.0).clamp(0.0, 255.0) as u8;
                img.put_pixel(i as u32 % w, i as u32 / w, Rgb([g, g, g]));
            }
        }
    }
    img.save(path).map_err(|e| crate::error::Error::Format(format!("png encode: {e}")))?;
    Ok(())
}

/// Render a probability map with its level-set contours (dark green at the
/// lower level, bright green at the higher) and a marker at the peak.
pub fn save_probability_png(pm: &ProbabilityMap, path: &Path) -> Result<()> {
    let (w, h) = (pm.map.width() as u32, pm.map.height() as u32);
    let mut img = RgbImage::new(w, h);
    for (i, &v) in pm.map.values().iter().enumerate() {
        let g = (v.clamp(0.0, 1.0) * 255.0) as u8;
        img.put_pixel(i as u32 % w, i as u32 / w, Rgb([g, g, g]));
    }
    for (k, (_level, segs)) in pm.contours.iter().enumerate() {
        let color = if k == 0 { Rgb([0, 120, 0]) } else { Rgb([0, 255, 0]) };
        for &((x0, y0), (x1, y1)) in segs {
            let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1) * 2;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let x = (x0 + (x1 - x0) * t).round();
                let y = (y0 + (y1 - y0) * t).round();
                if x >= 0.0 && y >= 0.0 && (x as u32) < w && (y as u32) < h {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    // crosshair at the peak
    let (pr, pc) = pm.p_max_location;
    for d in -3i64..=3 {
        for (r, c) in [(pr as i64 + d, pc as i64), (pr as i64, pc as i64 + d)] {
            if r >= 0 && c >= 0 && (r as u32) < h && (c as u32) < w {
                img.put_pixel(c as u32, r as u32, Rgb([255, 0, 0]));
            }
        }
    }
    img.save(path).map_err(|e| crate::error::Error::Format(format!("png encode: {e}")))?;
    Ok(())
}
