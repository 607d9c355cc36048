//! End-to-end detection on an interferogram: sliding patches, Canny edge
//! pre-filter, classification, Gaussian-weighted probability merging,
//! peak-probability thresholding and component weight estimation.

use crate::cnn::CnnModel;
use crate::dataset::{enumerate_weight_classes, extract_patches, ClassScheme, WeightTriple};
use crate::error::{Error, Result};
use crate::grid::{quantize_grayscale, wrap_phase, Raster, Unit};

/// Canny edge detector settings and the acceptance threshold on the edge
/// pixel fraction.
#[derive(Debug, Clone, Copy)]
pub struct CannyConfig {
    pub sigma: f64,
    /// Low hysteresis threshold as a fraction of the max gradient magnitude.
    pub low_frac: f64,
    /// High hysteresis threshold as a fraction of the max gradient magnitude.
    pub high_frac: f64,
    /// Minimum edge-pixel fraction for a patch to be tested.
    pub tau_edge: f64,
}

impl Default for CannyConfig {
    fn default() -> Self {
        CannyConfig { sigma: 1.4, low_frac: 0.1, high_frac: 0.25, tau_edge: 0.01 }
    }
}

/// Detection settings.
#[derive(Debug, Clone, Copy)]
pub struct DetectConfig {
    pub patch: usize,
    pub stride: usize,
    pub threshold: f64,
    pub canny: CannyConfig,
    /// Gaussian merge kernel size in pixels.
    pub merge_size: usize,
    /// Gaussian merge kernel standard deviation in pixels.
    pub merge_sigma: f64,
}

impl DetectConfig {
    pub fn new(patch: usize, stride: usize) -> Self {
        DetectConfig {
            patch,
            stride,
            threshold: 0.5,
            canny: CannyConfig::default(),
            merge_size: 20,
            merge_sigma: 5.0,
        }
    }
}

/// Full-resolution merged probability map with its peak and level sets.
#[derive(Debug, Clone)]
pub struct ProbabilityMap {
    pub map: Raster,
    pub p_max: f64,
    /// (row, col) of the peak.
    pub p_max_location: (usize, usize),
    /// Level-set line segments ((x0,y0),(x1,y1)) in pixel coordinates, one
    /// entry per contour level.
    pub contours: Vec<(f64, Vec<((f64, f64), (f64, f64))>)>,
}

/// One classified (or skipped) patch.
#[derive(Debug, Clone)]
pub struct PatchRecord {
    /// Top-left (col, row).
    pub position: (usize, usize),
    pub tested: bool,
    /// Class probabilities; empty when the patch was rejected.
    pub probs: Vec<f64>,
    /// Deformation-class probability under the scheme's positivity rule.
    pub p_deform: f64,
}

/// Outcome of [`detect`] on one image.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub probability_map: ProbabilityMap,
    pub is_positive: bool,
    pub patches: Vec<PatchRecord>,
    /// Component weights of the peak tested patch (91-class scheme only).
    pub estimated_weights: Option<WeightTriple>,
}

fn reflect(i: i64, n: i64) -> usize {
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - 1 - i;
        }
    }
    i as usize
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut k: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Separable convolution with reflected boundaries and a unit-sum kernel.
fn blur(values: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let c = (kernel.len() as f64 - 1.0) / 2.0;
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                // even-length kernels sample at half-integer offsets; round
                // toward the left tap
                let off = (i as f64 - c).floor() as i64;
                acc += k * values[r * w + reflect(col as i64 + off, w as i64)];
            }
            tmp[r * w + col] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                let off = (i as f64 - c).floor() as i64;
                acc += k * tmp[reflect(r as i64 + off, h as i64) * w + col];
            }
            out[r * w + col] = acc;
        }
    }
    out
}

/// Canny edge detection on a grayscale patch: Gaussian smoothing, Sobel
/// gradients, non-maximum suppression and double-threshold hysteresis.
/// Returns the acceptance decision and the binary edge mask.
pub fn canny_prefilter(patch: &Raster, cfg: &CannyConfig) -> Result<(bool, Raster)> {
    patch.expect_unit(Unit::GrayU8)?;
    let (w, h) = (patch.width(), patch.height());
    let ksize = 2 * (3.0 * cfg.sigma).ceil() as usize + 1;
    let smooth = blur(patch.values(), w, h, &gaussian_kernel(ksize, cfg.sigma));
    let at = |r: i64, c: i64| smooth[reflect(r, h as i64) * w + reflect(c, w as i64)];
    let mut mag = vec![0.0f64; w * h];
    let mut dir = vec![0u8; w * h];
    let mut max_mag = 0.0f64;
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            let m = (gx * gx + gy * gy).sqrt();
            let i = r as usize * w + c as usize;
            mag[i] = m;
            max_mag = max_mag.max(m);
            // quantize the gradient direction to 0/45/90/135 degrees
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            dir[i] = if !(22.5..157.5).contains(&angle) {
                0
            } else if angle < 67.5 {
                1
            } else if angle < 112.5 {
                2
            } else {
                3
            };
        }
    }
    if max_mag == 0.0 {
        let mask = patch.with_values(Unit::GrayU8, vec![0.0; w * h])?;
        return Ok((false, mask));
    }
    let low = cfg.low_frac * max_mag;
    let high = cfg.high_frac * max_mag;
    // non-maximum suppression along the quantized gradient direction
    let mut thin = vec![0u8; w * h]; // 0 none, 1 weak, 2 strong
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let i = r as usize * w + c as usize;
            let m = mag[i];
            if m < low {
                continue;
            }
            let (d1, d2): ((i64, i64), (i64, i64)) = match dir[i] {
                0 => ((0, 1), (0, -1)),
                1 => ((-1, 1), (1, -1)),
                2 => ((1, 0), (-1, 0)),
                _ => ((1, 1), (-1, -1)),
            };
            let m1 = mag[reflect(r + d1.0, h as i64) * w + reflect(c + d1.1, w as i64)];
            let m2 = mag[reflect(r + d2.0, h as i64) * w + reflect(c + d2.1, w as i64)];
            if m >= m1 && m >= m2 {
                thin[i] = if m >= high { 2 } else { 1 };
            }
        }
    }
    // hysteresis: keep weak pixels 8-connected to a strong one
    let mut mask = vec![0.0f64; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] == 2).collect();
    for &i in &stack {
        mask[i] = 1.0;
    }
    while let Some(i) = stack.pop() {
        let (r, c) = ((i / w) as i64, (i % w) as i64);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nr >= h as i64 || nc < 0 || nc >= w as i64 {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if thin[j] == 1 && mask[j] == 0.0 {
                    mask[j] = 1.0;
                    stack.push(j);
                }
            }
        }
    }
    let edge_fraction = mask.iter().sum::<f64>() / (w * h) as f64;
    let mask = patch.with_values(Unit::GrayU8, mask)?;
    Ok((edge_fraction >= cfg.tau_edge, mask))
}

/// Piecewise-linear interpolation weights of `x` over sorted `centers`;
/// clamps outside the span.
fn bracket(centers: &[f64], x: f64) -> (usize, usize, f64) {
    if x <= centers[0] {
        return (0, 0, 0.0);
    }
    if x >= *centers.last().unwrap() {
        let last = centers.len() - 1;
        return (last, last, 0.0);
    }
    let mut j = 1;
    while centers[j] < x {
        j += 1;
    }
    let t = (x - centers[j - 1]) / (centers[j] - centers[j - 1]);
    (j - 1, j, t)
}

/// Merge per-patch deformation probabilities into a full-resolution map:
/// probabilities are deposited at patch centers on the stride-resolution
/// grid, bilinearly upsampled and smoothed with a unit-sum Gaussian.
pub fn merge_probabilities(
    patch_probs: &[((usize, usize), f64)],
    width: usize,
    height: usize,
    spacing_m: f64,
    cfg: &DetectConfig,
) -> Result<ProbabilityMap> {
    let map_values = if patch_probs.is_empty() {
        vec![0.0; width * height]
    } else {
        let cols = crate::dataset::patch_positions(width, cfg.patch, cfg.stride);
        let rows = crate::dataset::patch_positions(height, cfg.patch, cfg.stride);
        let col_index = |c: usize| cols.iter().position(|&v| v == c);
        let row_index = |r: usize| rows.iter().position(|&v| v == r);
        let mut grid = vec![0.0f64; cols.len() * rows.len()];
        for &((c0, r0), p) in patch_probs {
            let (ci, ri) = match (col_index(c0), row_index(r0)) {
                (Some(ci), Some(ri)) => (ci, ri),
                _ => {
                    return Err(Error::InvalidDataset(format!(
                        "patch position ({c0}, {r0}) is not on the stride grid"
                    )))
                }
            };
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::OutOfRange(format!("probability {p} outside [0, 1]")));
            }
            grid[ri * cols.len() + ci] = p;
        }
        let cx: Vec<f64> = cols.iter().map(|&c| c as f64 + cfg.patch as f64 / 2.0).collect();
        let cy: Vec<f64> = rows.iter().map(|&r| r as f64 + cfg.patch as f64 / 2.0).collect();
        let mut full = vec![0.0f64; width * height];
        for r in 0..height {
            let (r0, r1, tr) = bracket(&cy, r as f64);
            for c in 0..width {
                let (c0, c1, tc) = bracket(&cx, c as f64);
                let g = |ri: usize, ci: usize| grid[ri * cols.len() + ci];
                let top = g(r0, c0) * (1.0 - tc) + g(r0, c1) * tc;
                let bot = g(r1, c0) * (1.0 - tc) + g(r1, c1) * tc;
                full[r * width + c] = top * (1.0 - tr) + bot * tr;
            }
        }
        blur(&full, width, height, &gaussian_kernel(cfg.merge_size, cfg.merge_sigma))
    };
    let map = Raster::new(
        width,
        height,
        spacing_m,
        Unit::Probability,
        // round away accumulated kernel-normalization error so a constant
        // field stays exactly at its value (the 0.5 threshold is strict)
        map_values.iter().map(|&v| (v.clamp(0.0, 1.0) * 1e12).round() / 1e12).collect(),
    )?;
    let p_max = map.values().iter().cloned().fold(0.0f64, f64::max);
    // confident detections saturate the classifier over a roughly symmetric
    // block of windows around the source, so the probability-weighted centroid
    // of the window centers localizes the peak far better than the argmax of
    // the interpolated map (whose ties fall on interpolation artifacts); a
    // single firing window reduces to its own center
    let mut loc = (0usize, 0usize);
    if p_max > 0.0 {
        let half = cfg.patch as f64 / 2.0;
        let (mut rs, mut cs, mut wsum) = (0.0f64, 0.0f64, 0.0f64);
        for &((c0, r0), p) in patch_probs {
            rs += p * (r0 as f64 + half);
            cs += p * (c0 as f64 + half);
            wsum += p;
        }
        if wsum > 0.0 {
            loc = (
                (rs / wsum).round().clamp(0.0, (height - 1) as f64) as usize,
                (cs / wsum).round().clamp(0.0, (width - 1) as f64) as usize,
            );
        } else {
            // blur spread a nonzero map from zero deposits cannot happen, but
            // fall back to the map argmax for safety
            let i = map
                .values()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            loc = (i / width, i % width);
        }
    }
    let contours = [0.5, 0.8]
        .iter()
        .map(|&level| (level, contour_segments(&map, level)))
        .collect();
    Ok(ProbabilityMap { map, p_max, p_max_location: loc, contours })
}

/// Marching-squares line segments of the level set `map == level`.
pub fn contour_segments(map: &Raster, level: f64) -> Vec<((f64, f64), (f64, f64))> {
    let (w, h) = (map.width(), map.height());
    let mut segs = Vec::new();
    if w < 2 || h < 2 {
        return segs;
    }
    let interp = |a: f64, b: f64| (level - a) / (b - a);
    for r in 0..h - 1 {
        for c in 0..w - 1 {
            let v = [
                map.get(r, c),
                map.get(r, c + 1),
                map.get(r + 1, c + 1),
                map.get(r + 1, c),
            ];
            let mut code = 0usize;
            for (i, &x) in v.iter().enumerate() {
                if x > level {
                    code |= 1 << i;
                }
            }
            if code == 0 || code == 15 {
                continue;
            }
            let (x, y) = (c as f64, r as f64);
            // edge midpoints by linear interpolation: top, right, bottom, left
            let top = (x + interp(v[0], v[1]), y);
            let right = (x + 1.0, y + interp(v[1], v[2]));
            let bottom = (x + interp(v[3], v[2]), y + 1.0);
            let left = (x, y + interp(v[0], v[3]));
            let mut push = |a: (f64, f64), b: (f64, f64)| segs.push((a, b));
            match code {
                1 | 14 => push(top, left),
                2 | 13 => push(top, right),
                3 | 12 => push(left, right),
                4 | 11 => push(right, bottom),
                6 | 9 => push(top, bottom),
                7 | 8 => push(left, bottom),
                5 => {
                    push(top, right);
                    push(left, bottom);
                }
                10 => {
                    push(top, left);
                    push(right, bottom);
                }
                _ => unreachable!(),
            }
        }
    }
    segs
}

/// Deformation probability of one class-probability vector under a scheme:
/// total probability of the classes that can contain deformation.
pub fn deformation_probability(probs: &[f64], scheme: &ClassScheme) -> f64 {
    match scheme {
        ClassScheme::TwoClass | ClassScheme::ThreeClass(_) => {
            let recipes = scheme.recipes();
            probs
                .iter()
                .zip(&recipes)
                .filter(|(_, r)| r.use_d)
                .map(|(p, _)| p)
                .sum()
        }
        ClassScheme::NinetyOneClass => {
            let reps = enumerate_weight_classes();
            probs
                .iter()
                .zip(&reps)
                .filter(|(_, w)| w.alpha > w.beta && w.alpha > w.gamma)
                .map(|(p, _)| p)
                .sum()
        }
    }
}

/// Final component weights from a 91-class probability vector:
/// the probability-weighted average of the sum-normalized representatives.
pub fn estimate_weights(probs: &[f64]) -> Result<WeightTriple> {
    if probs.len() != 91 {
        return Err(Error::Model(format!(
            "expected 91 class probabilities, got {}",
            probs.len()
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Model(format!("probabilities sum to {sum}, not 1")));
    }
    let reps = enumerate_weight_classes();
    let mut out = [0.0f64; 3];
    for (&p, r) in probs.iter().zip(&reps) {
        let a = r.as_array();
        let s = a[0] + a[1] + a[2];
        for k in 0..3 {
            out[k] += p * a[k] / s;
        }
    }
    Ok(WeightTriple { alpha: out[0], beta: out[1], gamma: out[2] })
}

/// Run detection on one interferogram. Unwrapped phase input is wrapped and
/// quantized first; grayscale input is used directly.
pub fn detect(
    img: &Raster,
    model: &CnnModel,
    scheme: &ClassScheme,
    cfg: &DetectConfig,
) -> Result<DetectionResult> {
    if model.n_classes() != scheme.class_count() {
        return Err(Error::Model(format!(
            "model has {} classes but the scheme defines {}",
            model.n_classes(),
            scheme.class_count()
        )));
    }
    if model.input_side() != cfg.patch {
        return Err(Error::Model(format!(
            "model input side {} differs from the configured patch size {}",
            model.input_side(),
            cfg.patch
        )));
    }
    let gray = match img.unit() {
        Unit::GrayU8 => img.clone(),
        Unit::PhaseRad => quantize_grayscale(&wrap_phase(img)?, true)?,
        other => {
            return Err(Error::UnitMismatch { expected: Unit::GrayU8, got: other });
        }
    };
    let mut records = Vec::new();
    let mut merged_inputs = Vec::new();
    for (patch, position) in extract_patches(&gray, cfg.patch, cfg.stride)? {
        let (accept, _mask) = canny_prefilter(&patch, &cfg.canny)?;
        if !accept {
            // edge-free patches are background without classification
            records.push(PatchRecord { position, tested: false, probs: Vec::new(), p_deform: 0.0 });
            continue;
        }
        let probs = model.predict_proba(&patch)?;
        let p_deform = deformation_probability(&probs, scheme);
        merged_inputs.push((position, p_deform));
        records.push(PatchRecord { position, tested: true, probs, p_deform });
    }
    let probability_map =
        merge_probabilities(&merged_inputs, gray.width(), gray.height(), gray.spacing_m(), cfg)?;
    let is_positive = probability_map.p_max > cfg.threshold;
    let estimated_weights = if matches!(scheme, ClassScheme::NinetyOneClass) {
        records
            .iter()
            .filter(|r| r.tested)
            .max_by(|a, b| a.p_deform.partial_cmp(&b.p_deform).unwrap())
            .map(|r| estimate_weights(&r.probs))
            .transpose()?
    } else {
        None
    };
    Ok(DetectionResult { probability_map, is_positive, patches: records, estimated_weights })
}
