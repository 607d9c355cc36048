//! A frozen scene corpus for end-to-end testing: half deforming scenes
//! (each with at least one full fringe of deformation), half
//! atmosphere-only scenes carrying zenith-delay pairs. Only recipes and
//! checksums are meant to live under version control; scenes regenerate
//! bit-exactly from their seeds.

use crate::atmos::{
    phase_per_mm_delay, sample_stratified_slope, synth_dem, synth_stratified, CovarianceParams,
    DemKind, StratifiedModel, TurbBackend, TurbulenceSynth,
};
use crate::config::ExperimentConfig;
use crate::dataset::{derive_seed, sample_components};
use crate::deform::{render_deformation, ElasticMedium, SourceKind, SourceModel};
use crate::error::{Error, Result};
use crate::grid::{quantize_grayscale, wrap_phase, GridShape, LosGeometry, Raster, Unit};
use crate::igrd;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// 64-bit FNV-1a hash, used for file checksums and run manifests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xCBF29CE484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001B3);
    }
    h
}

pub fn fnv1a64_file(path: &Path) -> Result<u64> {
    Ok(fnv1a64(&std::fs::read(path)?))
}

/// One generated scene with its ground truth.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: String,
    pub deforming: bool,
    /// (row, col) of the source epicentre for deforming scenes.
    pub epicenter: Option<(usize, usize)>,
    pub seed: u64,
    pub dir: PathBuf,
}

const CHECKSUM_FILE: &str = "checksums.txt";
const TRUTH_FILE: &str = "truth.txt";

/// Fixed mixing for deforming corpus scenes: full deformation with mild
/// atmosphere, so at least one fringe survives the weight normalization.
const CORPUS_WEIGHTS: (f64, f64, f64) = (1.0, 0.1, 0.1);

/// Generate one deforming scene, retrying seeds until the deformation
/// contribution to the composed interferogram spans at least one fringe.
fn deforming_scene(
    base_seed: u64,
    grid: &GridShape,
) -> Result<(Raster, Raster, Raster, Raster, (usize, usize), u64, String)> {
    let (alpha, beta, gamma) = CORPUS_WEIGHTS;
    let norm = alpha + beta + gamma;
    // corpus deforming scenes use compact, shallow inflation sources (Mogi or
    // penny crack) placed near the scene centre with a controlled fringe
    // count, so the epicenter is well-defined and the probability peak can be
    // meaningfully localized; extended dislocations have no single epicenter
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, 0xC5));
    let kind = if rng.gen_bool(0.5) { SourceKind::Mogi } else { SourceKind::Penny };
    let seed = derive_seed(base_seed, 0);
    let scene = sample_components(seed, grid, Some(kind))?;
    let (hx, hy) = grid.half_extent_m();
    let x = rng.gen_range(-hx / 8.0..hx / 8.0);
    let y = rng.gen_range(-hy / 8.0..hy / 8.0);
    let depth = rng.gen_range(800.0..1400.0);
    let fringes = rng.gen_range(2.5..5.0);
    let src = match scene.source {
        SourceModel::Mogi(mut m) => {
            m.x_m = x;
            m.y_m = y;
            m.depth_m = depth;
            SourceModel::Mogi(m)
        }
        SourceModel::PennyCrack(mut p) => {
            p.x_m = x;
            p.y_m = y;
            p.depth_m = depth;
            p.radius_m = p.radius_m.min(depth);
            SourceModel::PennyCrack(p)
        }
        other => other,
    };
    let d = render_deformation(&src, &ElasticMedium::crustal(), &scene.geom, grid)?;
    // set the weighted fringe count exactly (linear in source strength)
    let (lo, hi) = d.min_max();
    if hi - lo <= 0.0 {
        return Err(Error::InvalidSource(format!(
            "degenerate deformation field from base seed {base_seed}"
        )));
    }
    let scale = fringes * 2.0 * PI * norm / (alpha * (hi - lo));
    let d_vals: Vec<f64> = d.values().iter().map(|&v| v * scale).collect();
    let d = d.with_values(Unit::PhaseRad, d_vals)?;
    // the observable epicenter is the extremum of the LOS phase pattern: the
    // horizontal displacement components shift it away from the source's
    // ground position, and the pattern center is what detection can localize
    let median = {
        let mut v = d.values().to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let (mut best_i, mut best_dev) = (0usize, -1.0f64);
    for (i, &v) in d.values().iter().enumerate() {
        let dev = (v - median).abs();
        if dev > best_dev {
            best_dev = dev;
            best_i = i;
        }
    }
    let epicenter = (best_i / grid.width, best_i % grid.width);
    let composed: Vec<f64> = d
        .values()
        .iter()
        .zip(scene.s.values())
        .zip(scene.t.values())
        .map(|((&dv, &s), &t)| (alpha * dv + beta * s + gamma * t) / norm)
        .collect();
    let composed = d.with_values(Unit::PhaseRad, composed)?;
    let provenance = format!(
        "kind={} src={src:?} fringes={fringes:.2} {}",
        kind.name(),
        scene.provenance
    );
    Ok((d.clone(), scene.s.clone(), scene.t.clone(), composed, epicenter, seed, provenance))
}

/// Generate one atmosphere-only scene: stratified delay derived from a
/// zenith-delay pair over a synthetic edifice, plus turbulence.
fn atmosphere_scene(
    seed: u64,
    grid: &GridShape,
    geom: &LosGeometry,
) -> Result<(Raster, Raster, Raster, Raster, Raster, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xA7));
    let dem_kind = if rng.gen_bool(0.5) { DemKind::Cone } else { DemKind::Shield };
    let peak = rng.gen_range(800.0..2400.0);
    let dem = synth_dem(dem_kind, peak, grid, derive_seed(seed, 0xA8))?;
    let h_mean = dem.mean();
    // slope and mixing weights drawn from the same distributions as the
    // atmosphere-only training class
    let slope_rad_per_km = sample_stratified_slope(&mut rng);
    let mut beta: f64 = rng.gen_range(0.0..=1.0);
    let mut gamma: f64 = rng.gen_range(0.0..=1.0);
    if beta + gamma <= 1e-3 {
        beta = 1.0;
        gamma = 1.0;
    }
    let wsum = beta + gamma;
    let s_full = synth_stratified(
        &StratifiedModel::LinearElevation { dem: dem.clone(), slope_rad_per_km },
        geom,
    )?;
    let cov = CovarianceParams::sample(&mut rng);
    let t_full = TurbulenceSynth::with_backend(&cov, grid, TurbBackend::Circulant)?
        .realize(derive_seed(seed, 0xA9));
    let s_vals: Vec<f64> = s_full.values().iter().map(|&v| v * beta / wsum).collect();
    let s = s_full.with_values(Unit::PhaseRad, s_vals)?;
    let t_vals: Vec<f64> = t_full.values().iter().map(|&v| v * gamma / wsum).collect();
    let t = t_full.with_values(Unit::PhaseRad, t_vals)?;
    let composed: Vec<f64> =
        s.values().iter().zip(t.values()).map(|(&sv, &tv)| sv + tv).collect();
    let composed = s.with_values(Unit::PhaseRad, composed)?;
    // encode the composed scene's stratified part as an equivalent ZTD pair so
    // that a ZTD-based correction removes it exactly
    let delta_mm_per_km = slope_rad_per_km * (beta / wsum) / phase_per_mm_delay();
    let master_vals: Vec<f64> = dem.values().iter().map(|&h| 2300.0 - 0.15 * h).collect();
    let slave_vals: Vec<f64> = dem
        .values()
        .iter()
        .zip(&master_vals)
        .map(|(&h, &m)| m + delta_mm_per_km * (h - h_mean) / 1000.0)
        .collect();
    let ztd_master = dem.with_values(Unit::DelayMm, master_vals)?;
    let ztd_slave = dem.with_values(Unit::DelayMm, slave_vals)?;
    let provenance = format!(
        "dem={dem_kind:?}/{peak:.1} slope_rad_per_km={slope_rad_per_km:.3} beta={beta:.3} gamma={gamma:.3} cov=({:.4},{:.4})",
        cov.sigma2_max_mm2, cov.efold_km
    );
    Ok((s, t, composed, ztd_master, ztd_slave, provenance))
}

/// Generate the corpus under `dir` and write per-file checksums plus the
/// truth table. Returns the entries in scene order.
pub fn freeze_corpus(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<CorpusEntry>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let geom = LosGeometry::new(cfg.incidence_deg, cfg.heading_deg)?;
    std::fs::create_dir_all(dir)?;
    let n = cfg.corpus_scenes;
    let mut entries = Vec::with_capacity(n);
    let mut truth = String::new();
    let mut files: Vec<PathBuf> = Vec::new();
    for i in 0..n {
        let deforming = i < n / 2;
        let name = format!("scene_{i:02}");
        let scene_dir = dir.join(&name);
        std::fs::create_dir_all(&scene_dir)?;
        let seed = derive_seed(cfg.seed, 0xC0DE + i as u64);
        let mut recipe = String::new();
        let _ = writeln!(recipe, "name = {name}");
        let _ = writeln!(recipe, "deforming = {deforming}");
        let _ = writeln!(recipe, "grid = {}x{} @ {}", grid.width, grid.height, grid.spacing_m);
        let _ = writeln!(recipe, "incidence_deg = {}", cfg.incidence_deg);
        let _ = writeln!(recipe, "heading_deg = {}", cfg.heading_deg);
        let epicenter;
        if deforming {
            let (d, s, t, composed, epi, used_seed, provenance) =
                deforming_scene(seed, &grid)?;
            epicenter = Some(epi);
            let (a, b, g) = CORPUS_WEIGHTS;
            let _ = writeln!(recipe, "seed = {used_seed}");
            let _ = writeln!(recipe, "weights = ({a},{b},{g})");
            let _ = writeln!(recipe, "epicenter = ({}, {})", epi.0, epi.1);
            let _ = writeln!(recipe, "provenance = {provenance}");
            let wrapped = quantize_grayscale(&wrap_phase(&composed)?, true)?;
            for (fname, raster) in [
                ("d.igrd", &d),
                ("s.igrd", &s),
                ("t.igrd", &t),
                ("composed.igrd", &composed),
                ("wrapped.igrd", &wrapped),
            ] {
                let p = scene_dir.join(fname);
                igrd::write_file(&p, raster)?;
                files.push(p);
            }
        } else {
            let (s, t, composed, ztd_master, ztd_slave, provenance) =
                atmosphere_scene(seed, &grid, &geom)?;
            epicenter = None;
            let _ = writeln!(recipe, "seed = {seed}");
            let _ = writeln!(recipe, "provenance = {provenance}");
            let wrapped = quantize_grayscale(&wrap_phase(&composed)?, true)?;
            for (fname, raster) in [
                ("s.igrd", &s),
                ("t.igrd", &t),
                ("composed.igrd", &composed),
                ("wrapped.igrd", &wrapped),
                ("ztd_master.igrd", &ztd_master),
                ("ztd_slave.igrd", &ztd_slave),
            ] {
                let p = scene_dir.join(fname);
                igrd::write_file(&p, raster)?;
                files.push(p);
            }
        }
        let recipe_path = scene_dir.join("recipe.txt");
        std::fs::write(&recipe_path, &recipe)?;
        files.push(recipe_path);
        match epicenter {
            Some((r, c)) => {
                let _ = writeln!(truth, "{name} 1 {r} {c}");
            }
            None => {
                let _ = writeln!(truth, "{name} 0 - -");
            }
        }
        entries.push(CorpusEntry {
            name,
            deforming,
            epicenter,
            seed,
            dir: scene_dir,
        });
    }
    let truth_path = dir.join(TRUTH_FILE);
    std::fs::write(&truth_path, &truth)?;
    files.push(truth_path);

    let mut checksums = String::new();
    for f in &files {
        let rel = f.strip_prefix(dir).unwrap();
        let _ = writeln!(checksums, "{}\t{:016x}", rel.display(), fnv1a64_file(f)?);
    }
    std::fs::write(dir.join(CHECKSUM_FILE), checksums)?;
    Ok(entries)
}

/// Recompute every checksum listed in the corpus; mismatches and missing
/// files fail with their paths listed.
pub fn verify_corpus(dir: &Path) -> Result<usize> {
    let listing = std::fs::read_to_string(dir.join(CHECKSUM_FILE))
        .map_err(|_| Error::CorpusVerify(format!("missing {CHECKSUM_FILE} in {}", dir.display())))?;
    let mut bad = Vec::new();
    let mut n = 0usize;
    for line in listing.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((rel, want)) = line.rsplit_once('\t') else {
            return Err(Error::CorpusVerify(format!("malformed checksum line `{line}`")));
        };
        let want = u64::from_str_radix(want.trim(), 16)
            .map_err(|_| Error::CorpusVerify(format!("bad checksum value in `{line}`")))?;
        let path = dir.join(rel);
        match fnv1a64_file(&path) {
            Ok(got) if got == want => {}
            Ok(_) => bad.push(rel.to_string()),
            Err(_) => bad.push(format!("{rel} (missing)")),
        }
        n += 1;
    }
    if bad.is_empty() {
        Ok(n)
    } else {
        Err(Error::CorpusVerify(format!("checksum mismatch: {}", bad.join(", "))))
    }
}

/// Read back the truth table written by [`freeze_corpus`].
pub fn read_truth(dir: &Path) -> Result<Vec<(String, bool, Option<(usize, usize)>)>> {
    let text = std::fs::read_to_string(dir.join(TRUTH_FILE))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!("malformed truth line `{line}`")));
        }
        let truth = parts[1] == "1";
        let epi = if truth {
            Some((
                parts[2].parse().map_err(|_| Error::Format(format!("bad row in `{line}`")))?,
                parts[3].parse().map_err(|_| Error::Format(format!("bad col in `{line}`")))?,
            ))
        } else {
            None
        };
        out.push((parts[0].to_string(), truth, epi));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.grid_width = 64;
        cfg.grid_height = 64;
        cfg.corpus_scenes = 4;
        cfg
    }

    #[test]
    fn fnv_known_vectors() {
        // published FNV-1a test vectors
        assert_eq!(fnv1a64(b""), 0xCBF29CE484222325);
        assert_eq!(fnv1a64(b"a"), 0xAF63DC4C8601EC8C);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171F73967E8);
    }

    #[test]
    fn freeze_verify_and_regenerate() {
        let cfg = small_cfg();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("corpus_a");
        let entries = freeze_corpus(&cfg, &a).unwrap();
        assert_eq!(entries.len(), 4);
        assert_eq!(entries.iter().filter(|e| e.deforming).count(), 2);
        assert_eq!(verify_corpus(&a).unwrap() > 0, true);

        // identical regeneration in a second directory
        let b = dir.path().join("corpus_b");
        freeze_corpus(&cfg, &b).unwrap();
        let ca = std::fs::read_to_string(a.join(CHECKSUM_FILE)).unwrap();
        let cb = std::fs::read_to_string(b.join(CHECKSUM_FILE)).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn verify_flags_corruption_by_name() {
        let cfg = small_cfg();
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("corpus");
        freeze_corpus(&cfg, &root).unwrap();
        let victim = root.join("scene_01").join("composed.igrd");
        let mut bytes = std::fs::read(&victim).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xFF;
        std::fs::write(&victim, bytes).unwrap();
        let err = verify_corpus(&root).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("composed.igrd"), "error was: {msg}");
        assert!(msg.contains("scene_01"), "error was: {msg}");
    }

    #[test]
    fn deforming_scenes_have_a_fringe_and_truth_parses() {
        let cfg = small_cfg();
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("corpus");
        let entries = freeze_corpus(&cfg, &root).unwrap();
        for e in &entries {
            if e.deforming {
                let d = igrd::read_file(e.dir.join("d.igrd")).unwrap();
                let (lo, hi) = d.min_max();
                let (a, b, g) = CORPUS_WEIGHTS;
                assert!((hi - lo) * a / (a + b + g) >= 2.0 * PI);
                assert!(e.epicenter.is_some());
            } else {
                assert!(e.dir.join("ztd_master.igrd").exists());
                assert!(e.dir.join("ztd_slave.igrd").exists());
            }
        }
        let truth = read_truth(&root).unwrap();
        assert_eq!(truth.len(), 4);
        assert_eq!(truth.iter().filter(|(_, t, _)| *t).count(), 2);
    }
}
