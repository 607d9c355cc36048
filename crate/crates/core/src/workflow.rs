//! End-to-end pipeline stages. Each stage reads the artifacts of earlier
//! stages from the output directory, writes its own atomically (temp path +
//! rename), and every run refreshes `run_manifest.txt` with a checksum of
//! each artifact so reruns can be compared byte-for-byte.

use crate::cnn::{self, CnnModel};
use crate::config::ExperimentConfig;
use crate::corpus::{self, fnv1a64, fnv1a64_file};
use crate::correct::{apply_correction, InpaintConfig, MaskedRaster};
use crate::dataset::{
    self, build_dataset, derive_seed, LabeledDataset, PatchObservation, WeightTriple,
};
use crate::detect::{detect, DetectionResult};
use crate::error::{Error, Result};
use crate::grid::{quantize_grayscale, wrap_phase, GridShape, LosGeometry, Raster, Unit};
use crate::igrd;
use crate::metrics::{confusion, ppv, roc_curve};
use crate::viz;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "run_manifest.txt";
pub const CORPUS_DIR: &str = "corpus";
pub const DATASET_FILE: &str = "dataset.ipck";
pub const MODEL_FILE: &str = "model.imdl";
pub const RETRAINED_MODEL_FILE: &str = "model_retrained.imdl";
pub const DETECT_DIR: &str = "detect";
pub const DETECT_RESULTS: &str = "results.txt";
pub const CORRECT_DIR: &str = "correct";
pub const EVAL_DIR: &str = "evaluate";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Dataset,
    Train,
    Detect,
    Retrain,
    Correct,
    Evaluate,
    All,
}

impl Stage {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "synth" => Stage::Synth,
            "dataset" => Stage::Dataset,
            "train" => Stage::Train,
            "detect" => Stage::Detect,
            "retrain" => Stage::Retrain,
            "correct" => Stage::Correct,
            "evaluate" => Stage::Evaluate,
            "all" | "run-all" => Stage::All,
            other => return Err(Error::Config(format!("unknown stage '{other}'"))),
        })
    }

    fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Dataset => "dataset",
            Stage::Train => "train",
            Stage::Detect => "detect",
            Stage::Retrain => "retrain",
            Stage::Correct => "correct",
            Stage::Evaluate => "evaluate",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One scene-level detection outcome, as recorded in `detect/results.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneResult {
    pub name: String,
    pub truth_deforming: bool,
    pub truth_epicenter: Option<(usize, usize)>,
    pub p_max: f64,
    pub p_max_location: (usize, usize),
    pub positive: bool,
    pub weights: Option<WeightTriple>,
}

fn require(stage: Stage, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            stage: stage.name().to_string(),
            path: path.display().to_string(),
        })
    }
}

/// Build a stage's outputs in a scratch directory next to the destination,
/// then swap it into place; a failure leaves no partial artifact behind.
fn atomic_dir<F>(dest: &Path, build: F) -> Result<()>
where
    F: FnOnce(&Path) -> Result<()>,
{
    let tmp = dest.with_extension("tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    match build(&tmp) {
        Ok(()) => {
            if dest.exists() {
                fs::remove_dir_all(dest)?;
            }
            fs::rename(&tmp, dest)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&tmp);
            Err(e)
        }
    }
}

/// Same contract as [`atomic_dir`] for a single file.
fn atomic_file<F>(dest: &Path, build: F) -> Result<()>
where
    F: FnOnce(&Path) -> Result<()>,
{
    let tmp = dest.with_extension("tmp");
    match build(&tmp) {
        Ok(()) => {
            fs::rename(&tmp, dest)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Training scenes only need to cover the crop window plus a margin, so they
/// are synthesized on a smaller grid than full corpus scenes.
fn dataset_grid(cfg: &ExperimentConfig) -> Result<GridShape> {
    let side = (cfg.patch + cfg.patch / 4).min(cfg.grid_width.max(cfg.patch));
    GridShape::new(side, side, cfg.spacing_m)
}

fn stage_synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    atomic_dir(&out.join(CORPUS_DIR), |tmp| {
        corpus::freeze_corpus(cfg, tmp)?;
        Ok(())
    })
}

fn stage_dataset(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let grid = dataset_grid(cfg)?;
    let ds = build_dataset(
        &cfg.scheme,
        cfg.n_per_class,
        &grid,
        cfg.patch,
        derive_seed(cfg.seed, 0xDA7A),
    )?;
    atomic_file(&out.join(DATASET_FILE), |tmp| ds.write_file(tmp))
}

fn stage_train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let ds_path = out.join(DATASET_FILE);
    require(Stage::Train, &ds_path)?;
    let ds = LabeledDataset::read_file(&ds_path)?;
    let init = CnnModel::init(cfg.patch, cfg.scheme.class_count(), derive_seed(cfg.seed, 0x1717))?;
    let mut tc = cfg.train.clone();
    tc.seed = derive_seed(cfg.seed, 0x7121);
    let (model, history) = cnn::train(&init, &ds, &tc)?;
    atomic_file(&out.join(MODEL_FILE), |tmp| model.write_file(tmp, &history))
}

fn load_model(stage: Stage, out: &Path, prefer_retrained: bool) -> Result<(CnnModel, PathBuf)> {
    if prefer_retrained {
        let p = out.join(RETRAINED_MODEL_FILE);
        if p.exists() {
            let (m, _) = CnnModel::read_file(&p)?;
            return Ok((m, p));
        }
    }
    let p = out.join(MODEL_FILE);
    require(stage, &p)?;
    let (m, _) = CnnModel::read_file(&p)?;
    Ok((m, p))
}

fn detect_scene(cfg: &ExperimentConfig, model: &CnnModel, scene_dir: &Path) -> Result<(Raster, DetectionResult)> {
    let wrapped = igrd::read_file(scene_dir.join("wrapped.igrd"))?;
    let result = detect(&wrapped, model, &cfg.scheme, &cfg.detect_config())?;
    Ok((wrapped, result))
}

fn format_result_line(r: &SceneResult) -> String {
    let (er, ec) = match r.truth_epicenter {
        Some((r0, c0)) => (r0.to_string(), c0.to_string()),
        None => ("-".into(), "-".into()),
    };
    let w = match &r.weights {
        Some(w) => format!("{:.6} {:.6} {:.6}", w.alpha, w.beta, w.gamma),
        None => "- - -".into(),
    };
    format!(
        "{} {} {} {} {:.12} {} {} {} {}",
        r.name,
        r.truth_deforming as u8,
        er,
        ec,
        r.p_max,
        r.p_max_location.0,
        r.p_max_location.1,
        r.positive as u8,
        w
    )
}

/// Parse `detect/results.txt` back into scene records.
pub fn read_results(path: &Path) -> Result<Vec<SceneResult>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 11 {
            return Err(Error::Format(format!("bad results line: {line}")));
        }
        let parse_us = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Format(format!("bad integer '{s}' in results")))
        };
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Format(format!("bad float '{s}' in results")))
        };
        let epicenter = if f[2] == "-" { None } else { Some((parse_us(f[2])?, parse_us(f[3])?)) };
        let weights = if f[8] == "-" {
            None
        } else {
            Some(WeightTriple { alpha: parse_f(f[8])?, beta: parse_f(f[9])?, gamma: parse_f(f[10])? })
        };
        out.push(SceneResult {
            name: f[0].to_string(),
            truth_deforming: f[1] == "1",
            truth_epicenter: epicenter,
            p_max: parse_f(f[4])?,
            p_max_location: (parse_us(f[5])?, parse_us(f[6])?),
            positive: f[7] == "1",
            weights,
        });
    }
    Ok(out)
}

fn stage_detect(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let corpus_dir = out.join(CORPUS_DIR);
    require(Stage::Detect, &corpus_dir.join("truth.txt"))?;
    let (model, _) = load_model(Stage::Detect, out, false)?;
    let truth = corpus::read_truth(&corpus_dir)?;
    atomic_dir(&out.join(DETECT_DIR), |tmp| {
        let mut lines = vec![
            "# scene truth epi_row epi_col p_max row col positive alpha beta gamma".to_string(),
        ];
        for (name, deforming, epicenter) in &truth {
            let scene_dir = corpus_dir.join(name);
            let (wrapped, result) = detect_scene(cfg, &model, &scene_dir)?;
            let scene_out = tmp.join(name);
            fs::create_dir_all(&scene_out)?;
            igrd::write_file(scene_out.join("probmap.igrd"), &result.probability_map.map)?;
            viz::save_png(&wrapped, &scene_out.join("wrapped.png"))?;
            viz::save_probability_png(&result.probability_map, &scene_out.join("probmap.png"))?;
            lines.push(format_result_line(&SceneResult {
                name: name.clone(),
                truth_deforming: *deforming,
                truth_epicenter: *epicenter,
                p_max: result.probability_map.p_max,
                p_max_location: result.probability_map.p_max_location,
                positive: result.is_positive,
                weights: result.estimated_weights,
            }));
        }
        fs::write(tmp.join(DETECT_RESULTS), lines.join("\n") + "\n")?;
        Ok(())
    })
}

/// Ground truth for one patch: the scene deforms and the epicenter falls
/// inside the patch window.
fn patch_covers(epicenter: Option<(usize, usize)>, position: (usize, usize), patch: usize) -> bool {
    match epicenter {
        Some((er, ec)) => {
            let (c0, r0) = position;
            er >= r0 && er < r0 + patch && ec >= c0 && ec < c0 + patch
        }
        None => false,
    }
}

fn stage_retrain(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let corpus_dir = out.join(CORPUS_DIR);
    require(Stage::Retrain, &corpus_dir.join("truth.txt"))?;
    let (model, _) = load_model(Stage::Retrain, out, false)?;
    let truth = corpus::read_truth(&corpus_dir)?;
    let mut observations = Vec::new();
    for (name, deforming, epicenter) in &truth {
        let wrapped = igrd::read_file(corpus_dir.join(name).join("wrapped.igrd"))?;
        let gray = match wrapped.unit() {
            Unit::GrayU8 => wrapped,
            _ => quantize_grayscale(&wrap_phase(&wrapped)?, true)?,
        };
        let result = detect(&gray, &model, &cfg.scheme, &cfg.detect_config())?;
        let patches: std::collections::HashMap<(usize, usize), Raster> =
            dataset::extract_patches(&gray, cfg.patch, cfg.stride)?
                .into_iter()
                .map(|(p, pos)| (pos, p))
                .collect();
        for rec in result.patches.iter().filter(|r| r.tested) {
            let patch = patches
                .get(&rec.position)
                .ok_or_else(|| Error::InvalidDataset("patch position out of grid".into()))?
                .clone();
            observations.push(PatchObservation {
                position: rec.position,
                patch,
                probs: rec.probs.clone(),
                deforming: *deforming && patch_covers(*epicenter, rec.position, cfg.patch),
            });
        }
    }
    let delta = dataset::select_retrain_patches(&observations, &cfg.scheme)?;
    // blend the corrective patches with a fresh synthetic refresher so the
    // fine-tune cannot collapse onto the corpus alone
    let grid = dataset_grid(cfg)?;
    let refresher = build_dataset(
        &cfg.scheme,
        (cfg.n_per_class / 4).max(2),
        &grid,
        cfg.patch,
        derive_seed(cfg.seed, 0x2E7A),
    )?;
    let mut patches = refresher.patches;
    let mut labels = refresher.labels;
    patches.extend(delta.patches);
    labels.extend(delta.labels);
    let ds = LabeledDataset {
        patch_size: cfg.patch,
        n_classes: cfg.scheme.class_count(),
        patches,
        labels,
        manifest: format!("retrain delta: {} corrective patches", delta.positions.len()),
        train_fraction: 0.8,
    };
    let mut tc = cfg.train.clone();
    tc.seed = derive_seed(cfg.seed, 0x2E72);
    tc.max_epochs = tc.max_epochs.min(6);
    tc.final_layer_lr_mult = 10.0;
    let (tuned, history) = cnn::train(&model, &ds, &tc)?;
    atomic_file(&out.join(RETRAINED_MODEL_FILE), |tmp| tuned.write_file(tmp, &history))
}

fn stage_correct(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let corpus_dir = out.join(CORPUS_DIR);
    require(Stage::Correct, &corpus_dir.join("truth.txt"))?;
    let (model, _) = load_model(Stage::Correct, out, true)?;
    let truth = corpus::read_truth(&corpus_dir)?;
    let geom = LosGeometry::new(cfg.incidence_deg, cfg.heading_deg)?;
    atomic_dir(&out.join(CORRECT_DIR), |tmp| {
        let mut lines = vec!["# scene p_before p_after flipped".to_string()];
        for (name, deforming, _) in truth.iter().filter(|(_, d, _)| !d) {
            debug_assert!(!deforming);
            let scene_dir = corpus_dir.join(name);
            let (_, before) = detect_scene(cfg, &model, &scene_dir)?;
            if !before.is_positive {
                continue;
            }
            // false positive on an atmosphere-only scene: subtract the
            // stratified component predicted from the zenith-delay pair
            let composed = igrd::read_file(scene_dir.join("composed.igrd"))?;
            let ztd_m = igrd::read_file(scene_dir.join("ztd_master.igrd"))?;
            let ztd_s = igrd::read_file(scene_dir.join("ztd_slave.igrd"))?;
            let corrected = apply_correction(
                &MaskedRaster::fully_valid(composed),
                &ztd_m,
                &ztd_s,
                &geom,
                &InpaintConfig::default(),
            )?;
            let after = detect(&corrected, &model, &cfg.scheme, &cfg.detect_config())?;
            let scene_out = tmp.join(name);
            fs::create_dir_all(&scene_out)?;
            igrd::write_file(scene_out.join("corrected.igrd"), &corrected)?;
            viz::save_png(&corrected, &scene_out.join("corrected.png"))?;
            lines.push(format!(
                "{} {:.12} {:.12} {}",
                name,
                before.probability_map.p_max,
                after.probability_map.p_max,
                (!after.is_positive) as u8
            ));
        }
        fs::write(tmp.join("summary.txt"), lines.join("\n") + "\n")?;
        Ok(())
    })
}

fn stage_evaluate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let results_path = out.join(DETECT_DIR).join(DETECT_RESULTS);
    require(Stage::Evaluate, &results_path)?;
    let results = read_results(&results_path)?;
    let pairs: Vec<(f64, bool)> =
        results.iter().map(|r| (r.p_max, r.truth_deforming)).collect();
    let counts = confusion(&pairs, cfg.threshold)?;
    let precision = ppv(&counts);
    let roc = roc_curve(&pairs)?;
    atomic_dir(&out.join(EVAL_DIR), |tmp| {
        let fmt_opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "undefined".to_string(),
        };
        let metrics = format!(
            "threshold {}\ntp {}\nfp {}\nfn {}\ntn {}\nppv {}\nrecall {}\naccuracy {}\nauc {:.6}\n",
            cfg.threshold,
            counts.tp,
            counts.fp,
            counts.fn_,
            counts.tn,
            fmt_opt(precision),
            fmt_opt(counts.recall()),
            fmt_opt(counts.accuracy()),
            roc.auc
        );
        fs::write(tmp.join("metrics.txt"), metrics)?;
        let mut csv = String::from("fpr,tpr,threshold\n");
        for &(fpr, tpr, thr) in &roc.points {
            csv.push_str(&format!("{fpr:.12},{tpr:.12},{thr:.12}\n"));
        }
        fs::write(tmp.join("roc.csv"), csv)?;
        Ok(())
    })
}

/// Recursively list files under `root` as sorted paths relative to it.
fn walk_sorted(root: &Path) -> Result<Vec<PathBuf>> {
    fn rec(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                rec(&p, root, out)?;
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    rec(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

/// Rewrite `run_manifest.txt`: the effective configuration followed by the
/// checksum of every artifact currently in the output directory.
fn write_manifest(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut body = String::new();
    body.push_str("[configuration]\n");
    body.push_str(&cfg.to_text());
    body.push_str("\n[artifacts]\n");
    for rel in walk_sorted(out)? {
        if rel == Path::new(MANIFEST_FILE) {
            continue;
        }
        let hash = fnv1a64_file(&out.join(&rel))?;
        let rel_str = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        body.push_str(&format!("{rel_str}\t{hash:016x}\n"));
    }
    body.push_str(&format!("\n[manifest-hash]\n{:016x}\n", fnv1a64(body.as_bytes())));
    fs::write(out.join(MANIFEST_FILE), body)?;
    Ok(())
}

/// Read the trailing hash line from a run manifest.
pub fn manifest_hash(out: &Path) -> Result<u64> {
    let text = fs::read_to_string(out.join(MANIFEST_FILE))?;
    let line = text
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Format("empty run manifest".into()))?;
    u64::from_str_radix(line.trim(), 16)
        .map_err(|_| Error::Format(format!("bad manifest hash line: {line}")))
}

/// Run one stage (or the whole pipeline) and refresh the run manifest.
pub fn run_workflow(cfg: &ExperimentConfig, stage: Stage) -> Result<()> {
    cfg.validate()?;
    let out = cfg.resolved_out_dir();
    fs::create_dir_all(&out)?;
    cfg.write_file(&out.join("config.txt"))?;
    let stages: &[Stage] = match stage {
        Stage::All => &[
            Stage::Synth,
            Stage::Dataset,
            Stage::Train,
            Stage::Detect,
            Stage::Retrain,
            Stage::Correct,
            Stage::Evaluate,
        ],
        _ => std::slice::from_ref(&stage),
    };
    for &s in stages {
        match s {
            Stage::Synth => stage_synth(cfg, &out)?,
            Stage::Dataset => stage_dataset(cfg, &out)?,
            Stage::Train => stage_train(cfg, &out)?,
            Stage::Detect => stage_detect(cfg, &out)?,
            Stage::Retrain => stage_retrain(cfg, &out)?,
            Stage::Correct => stage_correct(cfg, &out)?,
            Stage::Evaluate => stage_evaluate(cfg, &out)?,
            Stage::All => unreachable!(),
        }
    }
    write_manifest(cfg, &out)
}
