//! System-level acceptance checks. Each test prints a single PASS/FAIL line
//! for its criterion before asserting, so `--nocapture` gives a one-line
//! verdict per criterion.

use insarforge::atmos::{
    estimate_cov_params, phase_per_mm_delay, stratified_from_ztd, synth_dem, CovarianceParams,
    DemKind, StratifiedModel, TurbBackend, TurbulenceSynth,
};
use insarforge::cnn::{self, CnnModel, TrainConfig};
use insarforge::config::ExperimentConfig;
use insarforge::corpus;
use insarforge::correct::{apply_correction, laplacian_inpaint, InpaintConfig, MaskedRaster};
use insarforge::dataset::{
    build_dataset, derive_seed, enumerate_weight_classes, patch_positions, ClassScheme,
    LabeledDataset, WeightTriple,
};
use insarforge::deform::{
    mogi_displacement, okada_displacement, okada_point_displacement, penny_displacement,
    penny_equivalent_volume, ElasticMedium, MogiSource, OkadaSource, OkadaSubtype,
    PennyCrackSource,
};
use insarforge::detect::{detect, estimate_weights};
use insarforge::grid::{GridShape, LosGeometry, Raster, Unit};
use insarforge::metrics::{ppv, ConfusionCounts};
use insarforge::workflow::{manifest_hash, run_workflow, Stage};
use insarforge::igrd;
use std::sync::OnceLock;
use std::time::Instant;

fn report(criterion: usize, desc: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion:2}: {} - {desc} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {desc} ({detail})");
}

// ---------------------------------------------------------------------------
// criterion 1: forward-model oracle equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_forward_model_oracles() {
    let t0 = Instant::now();
    let medium = ElasticMedium::crustal();
    let grid = GridShape::new(64, 64, 500.0).unwrap();

    // small rectangular dislocation far below the grid vs its point-source limit
    let src = OkadaSource {
        x_m: 0.0,
        y_m: 0.0,
        depth_m: 9000.0,
        strike_deg: 40.0,
        dip_deg: 55.0,
        rake_deg: 30.0,
        length_m: 150.0,
        width_m: 150.0,
        slip_m: 1.0,
        opening_m: 0.0,
        subtype: OkadaSubtype::Earthquake,
    };
    let finite = okada_displacement(&src, &medium, &grid).unwrap();
    let area = src.length_m * src.width_m;
    let d_c = src.depth_m + src.width_m / 2.0 * src.dip_deg.to_radians().sin();
    let rake = src.rake_deg.to_radians();
    let mut point = Vec::with_capacity(grid.len());
    for row in 0..grid.height {
        for col in 0..grid.width {
            point.push(okada_point_displacement(
                &medium,
                src.strike_deg,
                src.dip_deg,
                d_c,
                src.slip_m * rake.cos() * area,
                src.slip_m * rake.sin() * area,
                0.0,
                grid.x_of_col(col),
                grid.y_of_row(row),
            ));
        }
    }
    let pmax = point.iter().flat_map(|p| p.iter().map(|v| v.abs())).fold(0.0f64, f64::max);
    let mut okada_err = 0.0f64;
    for (i, p) in point.iter().enumerate() {
        let (row, col) = (i / grid.width, i % grid.width);
        let f = [
            finite.east.get(row, col),
            finite.north.get(row, col),
            finite.up.get(row, col),
        ];
        for k in 0..3 {
            let denom = p[k].abs().max(1e-3 * pmax);
            okada_err = okada_err.max((f[k] - p[k]).abs() / denom);
        }
    }
    let okada_ok = okada_err < 0.01;

    // penny crack at depth/radius = 5 vs the Mogi source of equal volume change
    let penny = PennyCrackSource {
        x_m: 0.0,
        y_m: 0.0,
        depth_m: 5000.0,
        radius_m: 1000.0,
        d_pressure_pa: 5e6,
    };
    let vol = penny_equivalent_volume(&penny, &medium);
    let mogi = MogiSource { x_m: 0.0, y_m: 0.0, depth_m: penny.depth_m, d_volume_m3: vol };
    let geom = LosGeometry::new(38.0, 190.0).unwrap();
    let penny_los =
        penny_displacement(&penny, &medium, &grid).unwrap().project_los(&geom).unwrap();
    let mogi_los = mogi_displacement(&mogi, &medium, &grid).unwrap().project_los(&geom).unwrap();
    let scale =
        mogi_los.values().iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let penny_err = penny_los
        .values()
        .iter()
        .zip(mogi_los.values())
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0f64, f64::max);
    let penny_ok = penny_err < 0.05;

    let in_time = t0.elapsed().as_secs_f64() < 60.0;
    report(
        1,
        "forward-model oracle equivalence",
        okada_ok && penny_ok && in_time,
        &format!(
            "okada rel err {okada_err:.2e}, penny-vs-mogi rel err {penny_err:.2e}, {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 2: turbulence statistics
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_turbulence_statistics() {
    let t0 = Instant::now();
    let p = CovarianceParams::new(7.0, 10.0).unwrap();
    let grid = GridShape::new(32, 32, 4000.0).unwrap();
    let synth = TurbulenceSynth::new(&p, &grid).unwrap();
    let n = 2000usize;
    let mut sum = vec![0.0f64; grid.len()];
    let mut sum_sq = vec![0.0f64; grid.len()];
    let (mut est_s2, mut est_l) = (0.0f64, 0.0f64);
    for s in 0..n {
        let f = synth.realize_delay_mm(40_000 + s as u64);
        for (i, &x) in f.values().iter().enumerate() {
            sum[i] += x;
            sum_sq[i] += x * x;
        }
        let est = estimate_cov_params(&f).unwrap();
        est_s2 += est.sigma2_max_mm2;
        est_l += est.efold_km;
    }
    let mean_var = (0..grid.len())
        .map(|i| (sum_sq[i] - sum[i] * sum[i] / n as f64) / (n as f64 - 1.0))
        .sum::<f64>()
        / grid.len() as f64;
    let var_ok = (6.3..=7.7).contains(&mean_var);
    est_s2 /= n as f64;
    est_l /= n as f64;
    let est_ok = (est_s2 - 7.0).abs() / 7.0 < 0.1 && (est_l - 10.0).abs() / 10.0 < 0.1;

    // backend agreement: covariance against the centre pixel by lag bin, 16x16
    let grid16 = GridShape::new(16, 16, 4000.0).unwrap();
    let n16 = 1200usize;
    let mut lags: Vec<Vec<f64>> = Vec::new();
    for backend in [TurbBackend::Cholesky, TurbBackend::Circulant] {
        let synth = TurbulenceSynth::with_backend(&p, &grid16, backend).unwrap();
        let c = grid16.len() / 2 + grid16.width / 2;
        let mut acc = vec![0.0f64; 12];
        let mut cnt = vec![0.0f64; 12];
        for s in 0..n16 {
            let f = synth.realize_delay_mm(50_000 + s as u64);
            let vc = f.values()[c];
            for (i, &v) in f.values().iter().enumerate() {
                let dr = (i / 16) as f64 - (c / 16) as f64;
                let dc = (i % 16) as f64 - (c % 16) as f64;
                let b = dr.hypot(dc).round() as usize;
                if b < 12 {
                    acc[b] += vc * v;
                    cnt[b] += 1.0;
                }
            }
        }
        lags.push(acc.iter().zip(&cnt).map(|(s, c)| s / c / n16 as f64).collect());
    }
    let backend_err = (0..12)
        .map(|b| (lags[0][b] - lags[1][b]).abs() / p.sigma2_max_mm2)
        .fold(0.0f64, f64::max);
    let backend_ok = backend_err < 0.1;

    let elapsed = t0.elapsed().as_secs_f64();
    report(
        2,
        "turbulence variance, estimator recovery and backend agreement",
        var_ok && est_ok && backend_ok && elapsed < 120.0,
        &format!(
            "variance {mean_var:.3} mm^2, estimates ({est_s2:.2} mm^2, {est_l:.2} km), \
             backend max lag diff {backend_err:.3}, {elapsed:.1}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 3: gradient check
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_gradient_check() {
    let t0 = Instant::now();
    let model = CnnModel::init(64, 3, 2024).unwrap();
    let mut vals = Vec::with_capacity(64 * 64);
    let mut state = 0x9E3779B97F4A7C15u64;
    for _ in 0..64 * 64 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        vals.push((state >> 56) as f64 % 256.0);
    }
    let patch = Raster::new(64, 64, 90.0, Unit::GrayU8, vals).unwrap();
    let max_rel = cnn::gradient_check(&model, &patch, 1, 99, 240).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        3,
        "analytic vs central-difference gradients",
        max_rel < 1e-4 && elapsed < 60.0,
        &format!("max relative error {max_rel:.3e}, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// criterion 4: desk-scale classification
// ---------------------------------------------------------------------------

fn heldout_accuracy(model: &CnnModel, ds: &LabeledDataset, val: &[usize]) -> f64 {
    let mut correct = 0usize;
    for &i in val {
        let probs = model.predict_proba(&ds.patches[i]).unwrap();
        let pred = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        if pred == ds.labels[i] {
            correct += 1;
        }
    }
    correct as f64 / val.len() as f64
}

#[test]
fn criterion_04_two_class_accuracy() {
    let t0 = Instant::now();
    let grid = GridShape::new(80, 80, 90.0).unwrap();
    let ds = build_dataset(&ClassScheme::TwoClass, 500, &grid, 64, 404).unwrap();
    let (_, val) = ds.split_indices();
    let mut accs = Vec::new();
    for seed in [1u64, 2, 3] {
        let init = CnnModel::init(64, 2, derive_seed(404, seed)).unwrap();
        let tc = TrainConfig {
            max_epochs: 8,
            batch_size: 24,
            learning_rate: 1e-3,
            momentum: 0.9,
            patience: 4,
            seed,
            validation_fraction: 0.2,
            final_layer_lr_mult: 1.0,
        };
        let (model, _) = cnn::train(&init, &ds, &tc).unwrap();
        accs.push(heldout_accuracy(&model, &ds, &val));
    }
    let min = accs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        4,
        "two-class held-out accuracy over three seeds",
        mean >= 0.90 && min >= 0.85 && elapsed < 600.0,
        &format!("accuracies {accs:.3?}, mean {mean:.3}, min {min:.3}, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// shared detection model for criteria 5 and 9
// ---------------------------------------------------------------------------

fn detection_setup() -> &'static (ExperimentConfig, CnnModel) {
    static SETUP: OnceLock<(ExperimentConfig, CnnModel)> = OnceLock::new();
    SETUP.get_or_init(|| {
        let cfg = ExperimentConfig::default();
        let grid = GridShape::new(cfg.grid_width, cfg.grid_height, cfg.spacing_m).unwrap();
        let ds = build_dataset(
            &cfg.scheme,
            400,
            &grid,
            cfg.patch,
            derive_seed(cfg.seed, 0xACCE),
        )
        .unwrap();
        let init =
            CnnModel::init(cfg.patch, cfg.scheme.class_count(), derive_seed(cfg.seed, 0x55))
                .unwrap();
        let mut tc = cfg.train.clone();
        tc.seed = derive_seed(cfg.seed, 0x7A);
        let (model, _) = cnn::train(&init, &ds, &tc).unwrap();
        (cfg, model)
    })
}

#[test]
fn criterion_05_corpus_detection() {
    let (cfg, model) = detection_setup();
    let dir = tempfile::tempdir().unwrap();
    corpus::freeze_corpus(cfg, dir.path()).unwrap();
    let truth = corpus::read_truth(dir.path()).unwrap();
    let dcfg = cfg.detect_config();
    let (mut tp, mut fp, mut close) = (0usize, 0usize, 0usize);
    let (mut n_pos, mut n_neg) = (0usize, 0usize);
    for (name, deforming, epicenter) in &truth {
        let wrapped = igrd::read_file(dir.path().join(name).join("wrapped.igrd")).unwrap();
        let result = detect(&wrapped, model, &cfg.scheme, &dcfg).unwrap();
        if *deforming {
            n_pos += 1;
            if result.is_positive {
                tp += 1;
                let (er, ec) = epicenter.unwrap();
                let (pr, pc) = result.probability_map.p_max_location;
                let dist = ((pr as f64 - er as f64).powi(2) + (pc as f64 - ec as f64).powi(2))
                    .sqrt();
                if dist <= cfg.stride as f64 {
                    close += 1;
                }
            }
        } else {
            n_neg += 1;
            if result.is_positive {
                fp += 1;
            }
        }
    }
    report(
        5,
        "frozen-corpus end-to-end detection",
        n_pos == 10 && n_neg == 10 && tp >= 9 && fp <= 1 && close >= 8,
        &format!("tp {tp}/{n_pos}, fp {fp}/{n_neg}, peak within one stride {close}/{n_pos}"),
    );
}

// ---------------------------------------------------------------------------
// criterion 6: exact combinatorics and arithmetic identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_exact_identities() {
    let classes = enumerate_weight_classes();
    let count_ok = classes.len() == 91;
    let tri = |a: f64, b: f64, c: f64| WeightTriple { alpha: a, beta: b, gamma: c };
    let first_ok = classes.len() >= 3
        && classes[0] == tri(0.0, 0.0, 1.0)
        && classes[1] == tri(0.0, 0.25, 0.75)
        && classes[2] == tri(0.0, 0.5, 0.5);
    let last_ok = classes.last() == Some(&tri(1.0, 1.0, 1.0));

    let cols = patch_positions(500, 224, 28);
    let grid_ok = cols.len() * cols.len() == 100;

    let a = ConfusionCounts { tp: 41, fp: 9, fn_: 0, tn: 0 };
    let b = ConfusionCounts { tp: 42, fp: 62, fn_: 0, tn: 0 };
    let ppv_ok = ppv(&a) == Some(0.82) && (ppv(&b).unwrap() - 0.404).abs() < 5e-4;
    let rows = [(41usize, 9usize, 50usize), (42, 62, 104), (34, 20, 54), (30, 24, 54)];
    let p_ok = rows.iter().all(|&(tp, fp, p)| {
        ConfusionCounts { tp, fp, fn_: 0, tn: 0 }.predicted_positives() == p
    });

    report(
        6,
        "exact combinatorics and arithmetic identities",
        count_ok && first_ok && last_ok && grid_ok && ppv_ok && p_ok,
        &format!(
            "classes {}, positions {}, ppv fixtures {}, P=TP+FP {}",
            classes.len(),
            cols.len() * cols.len(),
            ppv_ok,
            p_ok
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 7: weight recovery from probability vectors
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_weight_recovery() {
    let classes = enumerate_weight_classes();
    let normalize = |w: &WeightTriple| {
        let s = w.alpha + w.beta + w.gamma;
        [w.alpha / s, w.beta / s, w.gamma / s]
    };
    let mut one_hot_exact = true;
    for (c, rep) in classes.iter().enumerate() {
        let mut probs = vec![0.0; 91];
        probs[c] = 1.0;
        let got = estimate_weights(&probs).unwrap();
        let want = normalize(rep);
        if [got.alpha, got.beta, got.gamma] != want {
            one_hot_exact = false;
        }
    }
    let uniform = vec![1.0 / 91.0; 91];
    let got = estimate_weights(&uniform).unwrap();
    let mut centroid = [0.0f64; 3];
    for rep in &classes {
        let n = normalize(rep);
        for k in 0..3 {
            centroid[k] += n[k] / 91.0;
        }
    }
    let centroid_err = (got.alpha - centroid[0])
        .abs()
        .max((got.beta - centroid[1]).abs())
        .max((got.gamma - centroid[2]).abs());
    report(
        7,
        "probability-weighted mixture recovery",
        one_hot_exact && centroid_err < 1e-12,
        &format!("one-hot exact {one_hot_exact}, centroid err {centroid_err:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// criterion 8: atmospheric correction round-trip and planar inpainting
// ---------------------------------------------------------------------------

fn ztd_pair(dem: &Raster, delta_mm_per_km: f64) -> (Raster, Raster) {
    let mean = dem.mean();
    let master: Vec<f64> = dem.values().iter().map(|&h| 2300.0 - 0.15 * h).collect();
    let slave: Vec<f64> = dem
        .values()
        .iter()
        .zip(&master)
        .map(|(&h, &m)| m + delta_mm_per_km * (h - mean) / 1000.0)
        .collect();
    (
        dem.with_values(Unit::DelayMm, master).unwrap(),
        dem.with_values(Unit::DelayMm, slave).unwrap(),
    )
}

#[test]
fn criterion_08_correction_round_trip() {
    let grid = GridShape::new(96, 96, 200.0).unwrap();
    let medium = ElasticMedium::crustal();
    let geom = LosGeometry::new(38.0, 190.0).unwrap();
    let mogi = MogiSource { x_m: 900.0, y_m: -600.0, depth_m: 2500.0, d_volume_m3: 3e6 };
    let d = mogi_displacement(&mogi, &medium, &grid)
        .unwrap()
        .project_los(&geom)
        .unwrap();
    let d = {
        let vals: Vec<f64> =
            d.values().iter().map(|&u| -4.0 * std::f64::consts::PI / 0.05546 * u).collect();
        d.with_values(Unit::PhaseRad, vals).unwrap()
    };
    let dem = synth_dem(DemKind::Cone, 1800.0, &grid, 81).unwrap();
    let (ztd_m, ztd_s) = ztd_pair(&dem, 18.0);
    let s = stratified_from_ztd(
        &StratifiedModel::ZtdPair { ztd_master: ztd_m.clone(), ztd_slave: ztd_s.clone() },
        &geom,
    )
    .unwrap();
    let p = CovarianceParams::new(4.0, 6.0).unwrap();
    let t = TurbulenceSynth::with_backend(&p, &grid, TurbBackend::Circulant).unwrap().realize(82);
    let composed: Vec<f64> = d
        .values()
        .iter()
        .zip(s.values())
        .zip(t.values())
        .map(|((&dv, &sv), &tv)| dv + sv + tv)
        .collect();
    let composed = d.with_values(Unit::PhaseRad, composed).unwrap();
    let recovered = apply_correction(
        &MaskedRaster::fully_valid(composed),
        &ztd_m,
        &ztd_s,
        &geom,
        &InpaintConfig::default(),
    )
    .unwrap();
    let (dlo, dhi) = d.min_max();
    let range = dhi - dlo;
    let rms = (recovered
        .values()
        .iter()
        .zip(d.values())
        .zip(t.values())
        .map(|((&r, &dv), &tv)| (r - dv - tv).powi(2))
        .sum::<f64>()
        / grid.len() as f64)
        .sqrt();
    let round_trip_ok = rms / range < 0.01;

    // planar ramp through a 20%-area hole
    let ramp: Vec<f64> = (0..grid.len())
        .map(|i| 0.03 * (i % grid.width) as f64 - 0.02 * (i / grid.width) as f64)
        .collect();
    let ramp = Raster::new(grid.width, grid.height, grid.spacing_m, Unit::PhaseRad, ramp).unwrap();
    let hole = ((grid.len() as f64 * 0.2).sqrt()).floor() as usize; // ~20% square
    let mut valid = vec![true; grid.len()];
    let r0 = (grid.height - hole) / 2;
    let c0 = (grid.width - hole) / 2;
    let mut n_hole = 0usize;
    for r in r0..r0 + hole {
        for c in c0..c0 + hole {
            valid[r * grid.width + c] = false;
            n_hole += 1;
        }
    }
    let masked = MaskedRaster::new(ramp.clone(), valid).unwrap();
    let filled = laplacian_inpaint(&masked, &InpaintConfig::default()).unwrap();
    let (rlo, rhi) = ramp.min_max();
    let max_err = filled
        .values()
        .iter()
        .zip(ramp.values())
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / (rhi - rlo);
    let inpaint_ok = max_err < 1e-4;
    report(
        8,
        "atmospheric correction round-trip and planar inpainting",
        round_trip_ok && inpaint_ok,
        &format!(
            "round-trip rms {:.4}% of range, hole {:.1}% of area, ramp max err {:.2e}",
            100.0 * rms / range,
            100.0 * n_hole as f64 / grid.len() as f64,
            max_err
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 9: correction flips a stratified false positive
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_correction_flips_false_positive() {
    let (cfg, model) = detection_setup();
    let grid = cfg.grid().unwrap();
    let geom = LosGeometry::new(cfg.incidence_deg, cfg.heading_deg).unwrap();
    let dcfg = cfg.detect_config();
    let mut flagged = None;
    for attempt in 0..24u64 {
        let dem = synth_dem(
            if attempt % 2 == 0 { DemKind::Cone } else { DemKind::Shield },
            1200.0 + 80.0 * attempt as f64,
            &grid,
            derive_seed(0x5717, attempt),
        )
        .unwrap();
        let delta = 20.0 + 2.5 * attempt as f64;
        let (ztd_m, ztd_s) = ztd_pair(&dem, delta);
        let s = stratified_from_ztd(
            &StratifiedModel::ZtdPair { ztd_master: ztd_m.clone(), ztd_slave: ztd_s.clone() },
            &geom,
        )
        .unwrap();
        let before = detect(&s, model, &cfg.scheme, &dcfg).unwrap();
        if before.is_positive {
            flagged = Some((s, ztd_m, ztd_s, before.probability_map.p_max, attempt));
            break;
        }
    }
    let Some((s, ztd_m, ztd_s, p_before, attempt)) = flagged else {
        report(9, "correction flips a stratified false positive", false, "no scene flagged");
        return;
    };
    let corrected = apply_correction(
        &MaskedRaster::fully_valid(s),
        &ztd_m,
        &ztd_s,
        &geom,
        &InpaintConfig::default(),
    )
    .unwrap();
    let after = detect(&corrected, model, &cfg.scheme, &dcfg).unwrap();
    report(
        9,
        "correction flips a stratified false positive",
        !after.is_positive,
        &format!(
            "scene {attempt}: p_max {p_before:.3} before, {:.3} after, positive {} -> {}",
            after.probability_map.p_max,
            true,
            after.is_positive
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 10: determinism of run-all and corpus verification
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_run_all_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.grid_width = 64;
    cfg.grid_height = 64;
    cfg.n_per_class = 8;
    cfg.corpus_scenes = 6;
    cfg.train.max_epochs = 2;
    cfg.train.batch_size = 4;
    cfg.out_dir = dir.path().join("run");
    run_workflow(&cfg, Stage::All).unwrap();
    let h1 = manifest_hash(&cfg.resolved_out_dir()).unwrap();
    run_workflow(&cfg, Stage::All).unwrap();
    let h2 = manifest_hash(&cfg.resolved_out_dir()).unwrap();
    let verified = corpus::verify_corpus(&cfg.resolved_out_dir().join("corpus")).is_ok();
    report(
        10,
        "run-all determinism and corpus verification",
        h1 == h2 && verified,
        &format!("manifest hashes {h1:016x} / {h2:016x}, corpus verified {verified}"),
    );
}

// keep the wavelength constant honest between library and test
#[test]
fn phase_conversion_consistency() {
    let per_mm = phase_per_mm_delay();
    let expected = -4.0 * std::f64::consts::PI / (0.05546 * 1000.0);
    assert!((per_mm - expected).abs() < 1e-12);
}
