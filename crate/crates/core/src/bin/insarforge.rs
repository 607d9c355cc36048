//! Command-line front end for the synthetic-interferogram pipeline.

use clap::{Args, Parser, Subcommand};
use insarforge::atmos::{
    synth_dem, synth_stratified, synth_turbulent, CovarianceParams, DemKind, StratifiedModel,
};
use insarforge::cnn::CnnModel;
use insarforge::config::ExperimentConfig;
use insarforge::corpus;
use insarforge::correct::{apply_correction, InpaintConfig, MaskedRaster};
use insarforge::dataset::{
    compose_interferogram, derive_seed, sample_components, ClassScheme, WeightTriple,
};
use insarforge::deform::SourceKind;
use insarforge::detect::detect;
use insarforge::error::{Error, Result};
use insarforge::grid::LosGeometry;
use insarforge::metrics::{confusion, ppv, roc_curve};
use insarforge::workflow::{self, run_workflow, Stage};
use insarforge::{igrd, viz};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "insarforge", version, about = "Synthetic InSAR deformation pipeline")]
struct Cli {
    /// Experiment configuration file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker count accepted for compatibility; stages run deterministically
    /// on a single thread.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate individual synthetic components, or the frozen corpus stage.
    Synth {
        #[command(subcommand)]
        what: SynthCmd,
    },
    /// Build the labeled training dataset.
    Dataset,
    /// Train the classifier on the built dataset.
    Train,
    /// Detect deformation, on the corpus or on a single interferogram.
    Detect(DetectArgs),
    /// Fine-tune the model on corpus detection mistakes.
    Retrain,
    /// Apply atmospheric correction, on corpus false positives or one scene.
    Correct(CorrectArgs),
    /// Compute confusion counts, precision and an ROC curve.
    Evaluate(EvaluateArgs),
    /// Run every stage in order.
    RunAll,
    /// Freeze or verify the benchmark corpus.
    Corpus {
        #[command(subcommand)]
        what: CorpusCmd,
    },
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Synthetic volcanic edifice elevation model.
    Dem {
        /// cone | shield
        #[arg(long, default_value = "cone")]
        kind: String,
        #[arg(long, default_value_t = 1500.0)]
        peak_m: f64,
        #[arg(long = "out-file")]
        out_file: PathBuf,
    },
    /// Deformation phase map from a randomly drawn source.
    Deform {
        /// mogi | penny | earthquake | dyke | sill (random when omitted)
        #[arg(long)]
        source: Option<String>,
        #[arg(long = "out-file")]
        out_file: PathBuf,
    },
    /// Turbulent atmospheric phase screen.
    Turb {
        #[arg(long, default_value_t = 7.0)]
        sigma2_mm2: f64,
        #[arg(long, default_value_t = 10.0)]
        efold_km: f64,
        #[arg(long = "out-file")]
        out_file: PathBuf,
    },
    /// Stratified atmospheric phase screen over a synthetic edifice.
    Strat {
        /// Existing elevation raster; synthesized when omitted.
        #[arg(long)]
        dem: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        slope_rad_per_km: f64,
        #[arg(long = "out-file")]
        out_file: PathBuf,
    },
    /// Weighted sum of deformation and atmosphere rasters, wrapped.
    Compose {
        #[arg(long)]
        d: PathBuf,
        #[arg(long)]
        s: PathBuf,
        #[arg(long)]
        t: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.2)]
        beta: f64,
        #[arg(long, default_value_t = 0.2)]
        gamma: f64,
        #[arg(long = "out-file")]
        out_file: PathBuf,
    },
}

#[derive(Args)]
struct DetectArgs {
    /// Interferogram to analyze; omitting it runs the corpus detect stage.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Model file (defaults to the trained model in the output directory).
    #[arg(long)]
    model: Option<PathBuf>,
    /// two | 3 | 3:<variant> | 91 (defaults to the configured scheme).
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Where to write the probability map for single-image mode.
    #[arg(long = "out-file")]
    out_file: Option<PathBuf>,
}

#[derive(Args)]
struct CorrectArgs {
    /// Unwrapped interferogram; omitting it runs the corpus correct stage.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Validity mask raster (zero marks missing pixels).
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long = "ztd-master")]
    ztd_master: Option<PathBuf>,
    #[arg(long = "ztd-slave")]
    ztd_slave: Option<PathBuf>,
    #[arg(long)]
    incidence: Option<f64>,
    #[arg(long = "out-file")]
    out_file: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Detection results file (defaults to the detect stage output).
    #[arg(long)]
    results: Option<PathBuf>,
    /// Corpus directory providing truth labels to cross-check.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the ROC curve to this CSV path.
    #[arg(long)]
    roc: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Generate the benchmark scenes with truth and checksums.
    Freeze,
    /// Recompute checksums and compare against the frozen manifest.
    Verify,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::read_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if cli.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_raster_with_preview(path: &Path, raster: &insarforge::grid::Raster) -> Result<()> {
    igrd::write_file(path, raster)?;
    viz::save_png(raster, &path.with_extension("png"))?;
    println!("wrote {} ({}x{}, {:?})", path.display(), raster.width(), raster.height(), raster.unit());
    Ok(())
}

fn run_synth(cfg: &ExperimentConfig, what: &SynthCmd) -> Result<()> {
    let grid = cfg.grid()?;
    match what {
        SynthCmd::Dem { kind, peak_m, out_file } => {
            let dem = synth_dem(DemKind::parse(kind)?, *peak_m, &grid, derive_seed(cfg.seed, 1))?;
            write_raster_with_preview(out_file, &dem)
        }
        SynthCmd::Deform { source, out_file } => {
            let kind = source.as_deref().map(SourceKind::parse).transpose()?;
            let c = sample_components(derive_seed(cfg.seed, 2), &grid, kind)?;
            write_raster_with_preview(out_file, &c.d)
        }
        SynthCmd::Turb { sigma2_mm2, efold_km, out_file } => {
            let p = CovarianceParams::new(*sigma2_mm2, *efold_km)?;
            let t = synth_turbulent(&p, &grid, derive_seed(cfg.seed, 3))?;
            write_raster_with_preview(out_file, &t)
        }
        SynthCmd::Strat { dem, slope_rad_per_km, out_file } => {
            let dem = match dem {
                Some(p) => igrd::read_file(p)?,
                None => synth_dem(DemKind::Cone, 1500.0, &grid, derive_seed(cfg.seed, 4))?,
            };
            let geom = LosGeometry::new(cfg.incidence_deg, cfg.heading_deg)?;
            let s = synth_stratified(
                &StratifiedModel::LinearElevation { dem, slope_rad_per_km: *slope_rad_per_km },
                &geom,
            )?;
            write_raster_with_preview(out_file, &s)
        }
        SynthCmd::Compose { d, s, t, alpha, beta, gamma, out_file } => {
            let (d, s, t) = (igrd::read_file(d)?, igrd::read_file(s)?, igrd::read_file(t)?);
            let w = WeightTriple { alpha: *alpha, beta: *beta, gamma: *gamma };
            let composed = compose_interferogram(&d, &s, &t, &w)?;
            write_raster_with_preview(out_file, &composed)
        }
    }
}

fn run_detect(cfg: &ExperimentConfig, args: &DetectArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(t) = args.threshold {
        cfg.threshold = t;
        cfg.validate()?;
    }
    if let Some(s) = &args.scheme {
        cfg.scheme = ClassScheme::parse(s)?;
    }
    let Some(input) = &args.input else {
        return run_workflow(&cfg, Stage::Detect);
    };
    let model_path = args
        .model
        .clone()
        .unwrap_or_else(|| cfg.resolved_out_dir().join(workflow::MODEL_FILE));
    if !model_path.exists() {
        return Err(Error::MissingArtifact {
            stage: "detect".into(),
            path: model_path.display().to_string(),
        });
    }
    let (model, _) = CnnModel::read_file(&model_path)?;
    let img = igrd::read_file(input)?;
    let result = detect(&img, &model, &cfg.scheme, &cfg.detect_config())?;
    let pm = &result.probability_map;
    println!(
        "positive={} p_max={:.6} at row={} col={}",
        result.is_positive as u8, pm.p_max, pm.p_max_location.0, pm.p_max_location.1
    );
    if let Some(w) = &result.estimated_weights {
        println!("weights alpha={:.4} beta={:.4} gamma={:.4}", w.alpha, w.beta, w.gamma);
    }
    if let Some(out_file) = &args.out_file {
        igrd::write_file(out_file, &pm.map)?;
        viz::save_probability_png(pm, &out_file.with_extension("png"))?;
        println!("wrote {}", out_file.display());
    }
    Ok(())
}

fn run_correct(cfg: &ExperimentConfig, args: &CorrectArgs) -> Result<()> {
    let Some(input) = &args.input else {
        return run_workflow(cfg, Stage::Correct);
    };
    let (Some(ztd_m), Some(ztd_s)) = (&args.ztd_master, &args.ztd_slave) else {
        return Err(Error::Config(
            "correct on a single scene needs --ztd-master and --ztd-slave".into(),
        ));
    };
    let img = igrd::read_file(input)?;
    let masked = match &args.mask {
        Some(p) => {
            let mask = igrd::read_file(p)?;
            if !mask.same_grid(&img) {
                return Err(Error::GridMismatch("mask grid differs from the input".into()));
            }
            MaskedRaster::new(img, mask.values().iter().map(|&v| v != 0.0).collect())?
        }
        None => MaskedRaster::fully_valid(img),
    };
    let geom = LosGeometry::new(args.incidence.unwrap_or(cfg.incidence_deg), cfg.heading_deg)?;
    let corrected = apply_correction(
        &masked,
        &igrd::read_file(ztd_m)?,
        &igrd::read_file(ztd_s)?,
        &geom,
        &InpaintConfig::default(),
    )?;
    let out_file = args
        .out_file
        .clone()
        .ok_or_else(|| Error::Config("correct on a single scene needs --out-file".into()))?;
    write_raster_with_preview(&out_file, &corrected)
}

fn run_evaluate(cfg: &ExperimentConfig, args: &EvaluateArgs) -> Result<()> {
    if args.results.is_none() && args.truth.is_none() && args.roc.is_none() {
        return run_workflow(cfg, Stage::Evaluate);
    }
    let results_path = args
        .results
        .clone()
        .unwrap_or_else(|| cfg.resolved_out_dir().join(workflow::DETECT_DIR).join(workflow::DETECT_RESULTS));
    if !results_path.exists() {
        return Err(Error::MissingArtifact {
            stage: "evaluate".into(),
            path: results_path.display().to_string(),
        });
    }
    let mut results = workflow::read_results(&results_path)?;
    if let Some(truth_dir) = &args.truth {
        let truth = corpus::read_truth(truth_dir)?;
        for r in &mut results {
            let known = truth
                .iter()
                .find(|(name, _, _)| *name == r.name)
                .ok_or_else(|| Error::Eval(format!("scene {} missing from truth", r.name)))?;
            r.truth_deforming = known.1;
        }
    }
    let pairs: Vec<(f64, bool)> = results.iter().map(|r| (r.p_max, r.truth_deforming)).collect();
    let counts = confusion(&pairs, cfg.threshold)?;
    println!("tp={} fp={} fn={} tn={}", counts.tp, counts.fp, counts.fn_, counts.tn);
    match ppv(&counts) {
        Some(p) => println!("ppv={p:.6}"),
        None => println!("ppv=undefined"),
    }
    let roc = roc_curve(&pairs)?;
    println!("auc={:.6}", roc.auc);
    if let Some(roc_path) = &args.roc {
        let mut csv = String::from("fpr,tpr,threshold\n");
        for &(fpr, tpr, thr) in &roc.points {
            csv.push_str(&format!("{fpr:.12},{tpr:.12},{thr:.12}\n"));
        }
        fs::write(roc_path, csv)?;
        println!("wrote {}", roc_path.display());
    }
    Ok(())
}

fn run_corpus(cfg: &ExperimentConfig, what: &CorpusCmd) -> Result<()> {
    let dir = cfg.resolved_out_dir().join(workflow::CORPUS_DIR);
    match what {
        CorpusCmd::Freeze => {
            run_workflow(cfg, Stage::Synth)?;
            println!("froze corpus at {}", dir.display());
            Ok(())
        }
        CorpusCmd::Verify => {
            let n = corpus::verify_corpus(&dir)?;
            println!("verified {n} files at {}", dir.display());
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth { what } => run_synth(&cfg, what),
        Command::Dataset => run_workflow(&cfg, Stage::Dataset),
        Command::Train => run_workflow(&cfg, Stage::Train),
        Command::Detect(args) => run_detect(&cfg, args),
        Command::Retrain => run_workflow(&cfg, Stage::Retrain),
        Command::Correct(args) => run_correct(&cfg, args),
        Command::Evaluate(args) => run_evaluate(&cfg, args),
        Command::RunAll => run_workflow(&cfg, Stage::All),
        Command::Corpus { what } => run_corpus(&cfg, what),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
