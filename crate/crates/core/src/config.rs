//! Experiment configuration: every field has a default so the full
//! workflow runs with zero flags, and the file representation is flat
//! `key = value` text with `[section]` headers.

use crate::cnn::TrainConfig;
use crate::dataset::ClassScheme;
use crate::detect::DetectConfig;
use crate::error::{Error, Result};
use crate::grid::GridShape;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Environment variable overriding the output root directory.
pub const OUT_ENV: &str = "INSARFORGE_OUT";

/// All knobs of the end-to-end experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub grid_width: usize,
    pub grid_height: usize,
    pub spacing_m: f64,
    pub patch: usize,
    pub stride: usize,
    pub scheme: ClassScheme,
    /// Training samples generated per class.
    pub n_per_class: usize,
    pub threshold: f64,
    pub incidence_deg: f64,
    pub heading_deg: f64,
    pub corpus_scenes: usize,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            grid_width: 192,
            grid_height: 192,
            spacing_m: 90.0,
            patch: 64,
            stride: 8,
            scheme: ClassScheme::TwoClass,
            n_per_class: 120,
            threshold: 0.5,
            incidence_deg: 38.0,
            heading_deg: 190.0,
            corpus_scenes: 20,
            out_dir: PathBuf::from("out"),
            train: TrainConfig {
                max_epochs: 12,
                batch_size: 24,
                learning_rate: 1e-3,
                momentum: 0.9,
                patience: 4,
                seed: 7,
                validation_fraction: 0.2,
                final_layer_lr_mult: 1.0,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<GridShape> {
        GridShape::new(self.grid_width, self.grid_height, self.spacing_m)
    }

    pub fn detect_config(&self) -> DetectConfig {
        let mut cfg = DetectConfig::new(self.patch, self.stride);
        cfg.threshold = self.threshold;
        cfg
    }

    /// Output root, honoring the `INSARFORGE_OUT` environment override.
    pub fn resolved_out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.out_dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.train.validate()?;
        if self.patch > self.grid_width || self.patch > self.grid_height {
            return Err(Error::Config(format!(
                "patch {} exceeds grid {}x{}",
                self.patch, self.grid_width, self.grid_height
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must be in [0, 1]".into()));
        }
        if self.n_per_class < 2 {
            return Err(Error::Config("n_per_class must be at least 2".into()));
        }
        if self.corpus_scenes < 2 || self.corpus_scenes % 2 != 0 {
            return Err(Error::Config("corpus_scenes must be even and at least 2".into()));
        }
        Ok(())
    }

    /// Serialize to the flat sectioned text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "grid_width = {}", self.grid_width);
        let _ = writeln!(s, "grid_height = {}", self.grid_height);
        let _ = writeln!(s, "spacing_m = {}", self.spacing_m);
        let _ = writeln!(s, "patch = {}", self.patch);
        let _ = writeln!(s, "stride = {}", self.stride);
        let _ = writeln!(s, "scheme = {}", self.scheme.name());
        let _ = writeln!(s, "n_per_class = {}", self.n_per_class);
        let _ = writeln!(s, "threshold = {}", self.threshold);
        let _ = writeln!(s, "incidence_deg = {}", self.incidence_deg);
        let _ = writeln!(s, "heading_deg = {}", self.heading_deg);
        let _ = writeln!(s, "corpus_scenes = {}", self.corpus_scenes);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "[train]");
        let _ = writeln!(s, "max_epochs = {}", self.train.max_epochs);
        let _ = writeln!(s, "batch_size = {}", self.train.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.train.learning_rate);
        let _ = writeln!(s, "momentum = {}", self.train.momentum);
        let _ = writeln!(s, "patience = {}", self.train.patience);
        let _ = writeln!(s, "train_seed = {}", self.train.seed);
        let _ = writeln!(s, "validation_fraction = {}", self.train.validation_fraction);
        let _ = writeln!(s, "final_layer_lr_mult = {}", self.train.final_layer_lr_mult);
        s
    }

    /// Parse the flat sectioned text format; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].to_string();
                if section != "experiment" && section != "train" {
                    return Err(Error::Config(format!(
                        "unknown section [{section}] at line {}",
                        lineno + 1
                    )));
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "expected `key = value` at line {}: `{line}`",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::Config(format!("invalid {what} `{value}` at line {}", lineno + 1))
            };
            macro_rules! num {
                ($what:literal) => {
                    value.parse().map_err(|_| bad($what))?
                };
            }
            match (section.as_str(), key) {
                ("experiment", "seed") => cfg.seed = num!("seed"),
                ("experiment", "grid_width") => cfg.grid_width = num!("grid_width"),
                ("experiment", "grid_height") => cfg.grid_height = num!("grid_height"),
                ("experiment", "spacing_m") => cfg.spacing_m = num!("spacing_m"),
                ("experiment", "patch") => cfg.patch = num!("patch"),
                ("experiment", "stride") => cfg.stride = num!("stride"),
                ("experiment", "scheme") => cfg.scheme = ClassScheme::parse(value)?,
                ("experiment", "n_per_class") => cfg.n_per_class = num!("n_per_class"),
                ("experiment", "threshold") => cfg.threshold = num!("threshold"),
                ("experiment", "incidence_deg") => cfg.incidence_deg = num!("incidence_deg"),
                ("experiment", "heading_deg") => cfg.heading_deg = num!("heading_deg"),
                ("experiment", "corpus_scenes") => cfg.corpus_scenes = num!("corpus_scenes"),
                ("experiment", "out_dir") => cfg.out_dir = PathBuf::from(value),
                ("train", "max_epochs") => cfg.train.max_epochs = num!("max_epochs"),
                ("train", "batch_size") => cfg.train.batch_size = num!("batch_size"),
                ("train", "learning_rate") => cfg.train.learning_rate = num!("learning_rate"),
                ("train", "momentum") => cfg.train.momentum = num!("momentum"),
                ("train", "patience") => cfg.train.patience = num!("patience"),
                ("train", "train_seed") => cfg.train.seed = num!("train_seed"),
                ("train", "validation_fraction") => {
                    cfg.train.validation_fraction = num!("validation_fraction")
                }
                ("train", "final_layer_lr_mult") => {
                    cfg.train.final_layer_lr_mult = num!("final_layer_lr_mult")
                }
                _ => {
                    return Err(Error::Config(format!(
                        "unknown key `{key}` in section [{section}] at line {}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}
