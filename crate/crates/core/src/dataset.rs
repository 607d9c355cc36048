//! Synthetic training-set construction: interferogram composition from
//! weighted components, class schemes, patch extraction, augmentation and
//! retraining-set selection.

use crate::atmos::{
    estimate_cov_params, synth_dem, synth_stratified, CovarianceParams, DemKind,
    StratifiedModel, TurbBackend, TurbulenceSynth,
};
use crate::deform::{render_deformation, sample_source, ElasticMedium, SourceKind};
use crate::error::{Error, Result};
use crate::grid::{
    gray_to_phase, quantize_grayscale, wrap_phase, GridShape, Raster, Unit,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::io::{Read, Write};

/// Mixing weights of the deformation (alpha), stratified (beta) and
/// turbulent (gamma) components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightTriple {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Grid of admissible weight values for the class enumeration.
pub const WEIGHT_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

impl WeightTriple {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for v in [alpha, beta, gamma] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::OutOfRange(format!(
                    "weights must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(WeightTriple { alpha, beta, gamma })
    }

    pub fn sum(&self) -> f64 {
        self.alpha + self.beta + self.gamma
    }

    pub fn is_zero(&self) -> bool {
        self.sum() == 0.0
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

/// I = (alpha D + beta S + gamma T) / (alpha + beta + gamma), unwrapped.
pub fn compose_interferogram(
    d: &Raster,
    s: &Raster,
    t: &Raster,
    w: &WeightTriple,
) -> Result<Raster> {
    for r in [d, s, t] {
        r.expect_unit(Unit::PhaseRad)?;
    }
    if !d.same_grid(s) || !d.same_grid(t) {
        return Err(Error::GridMismatch("component rasters must share a grid".into()));
    }
    if w.is_zero() {
        return Err(Error::OutOfRange("all-zero weight triple".into()));
    }
    let norm = w.sum();
    let values = d
        .values()
        .iter()
        .zip(s.values())
        .zip(t.values())
        .map(|((&dv, &sv), &tv)| (w.alpha * dv + w.beta * sv + w.gamma * tv) / norm)
        .collect();
    d.with_values(Unit::PhaseRad, values)
}

/// The 91 scaling-equivalence classes of non-zero weight triples on the
/// 5-value grid, one canonical representative each.
///
/// Two triples are equivalent when one is a positive multiple of the other,
/// since composition normalizes by the weight sum. The representative of a
/// class is its sum-normalized triple when that lies on the grid, otherwise
/// the largest grid member. Classes whose representative sums to one are
/// listed first (lexicographically), then the rest (lexicographically);
/// this puts (0,0,1) first and (1,1,1) last.
pub fn enumerate_weight_classes() -> Vec<WeightTriple> {
    fn gcd(a: u32, b: u32) -> u32 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    // work in integer quarters: grid value v = q / 4, q in 0..=4
    let mut primitives: Vec<[u32; 3]> = Vec::new();
    let mut seen = HashSet::new();
    for i in 0..=4u32 {
        for j in 0..=4u32 {
            for k in 0..=4u32 {
                if i == 0 && j == 0 && k == 0 {
                    continue;
                }
                let g = gcd(gcd(i, j), k);
                let p = [i / g, j / g, k / g];
                if seen.insert(p) {
                    primitives.push(p);
                }
            }
        }
    }
    let mut reps: Vec<[f64; 3]> = primitives
        .iter()
        .map(|p| {
            let sum = (p[0] + p[1] + p[2]) as f64;
            let norm = [p[0] as f64 / sum, p[1] as f64 / sum, p[2] as f64 / sum];
            let on_grid = norm.iter().all(|v| (v * 4.0 - (v * 4.0).round()).abs() < 1e-12);
            if on_grid {
                norm
            } else {
                // largest multiple of the primitive with all entries <= 1
                let kmax = 4 / p.iter().copied().max().unwrap();
                [
                    p[0] as f64 * kmax as f64 / 4.0,
                    p[1] as f64 * kmax as f64 / 4.0,
                    p[2] as f64 * kmax as f64 / 4.0,
                ]
            }
        })
        .collect();
    reps.sort_by(|a, b| {
        let sa = (a[0] + a[1] + a[2] - 1.0).abs() < 1e-12;
        let sb = (b[0] + b[1] + b[2] - 1.0).abs() < 1e-12;
        sb.cmp(&sa).then_with(|| a.partial_cmp(b).unwrap())
    });
    reps.into_iter()
        .map(|r| WeightTriple { alpha: r[0], beta: r[1], gamma: r[2] })
        .collect()
}

/// Which of the three components a class mixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassRecipe {
    pub use_d: bool,
    pub use_s: bool,
    pub use_t: bool,
}

impl ClassRecipe {
    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.use_d {
            parts.push("D");
        }
        if self.use_s {
            parts.push("S");
        }
        if self.use_t {
            parts.push("T");
        }
        parts.join("+")
    }
}

/// The five three-way splits of component mixtures used for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreeClassVariant {
    /// D vs S vs T
    DvsSvsT,
    /// D+S vs S vs T
    DsVsSvsT,
    /// D+T vs S vs T
    DtVsSvsT,
    /// D+S+T vs S vs T
    DstVsSvsT,
    /// D+S+T vs S+T vs T
    DstVsStVsT,
}

impl ThreeClassVariant {
    pub const ALL: [ThreeClassVariant; 5] = [
        ThreeClassVariant::DvsSvsT,
        ThreeClassVariant::DsVsSvsT,
        ThreeClassVariant::DtVsSvsT,
        ThreeClassVariant::DstVsSvsT,
        ThreeClassVariant::DstVsStVsT,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ThreeClassVariant::DvsSvsT => "d-s-t",
            ThreeClassVariant::DsVsSvsT => "ds-s-t",
            ThreeClassVariant::DtVsSvsT => "dt-s-t",
            ThreeClassVariant::DstVsSvsT => "dst-s-t",
            ThreeClassVariant::DstVsStVsT => "dst-st-t",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown three-class variant `{s}`")))
    }

    fn recipes(&self) -> [ClassRecipe; 3] {
        let s = ClassRecipe { use_d: false, use_s: true, use_t: false };
        let t = ClassRecipe { use_d: false, use_s: false, use_t: true };
        let st = ClassRecipe { use_d: false, use_s: true, use_t: true };
        match self {
            ThreeClassVariant::DvsSvsT => {
                [ClassRecipe { use_d: true, use_s: false, use_t: false }, s, t]
            }
            ThreeClassVariant::DsVsSvsT => {
                [ClassRecipe { use_d: true, use_s: true, use_t: false }, s, t]
            }
            ThreeClassVariant::DtVsSvsT => {
                [ClassRecipe { use_d: true, use_s: false, use_t: true }, s, t]
            }
            ThreeClassVariant::DstVsSvsT => {
                [ClassRecipe { use_d: true, use_s: true, use_t: true }, s, t]
            }
            ThreeClassVariant::DstVsStVsT => {
                [ClassRecipe { use_d: true, use_s: true, use_t: true }, st, t]
            }
        }
    }
}

/// Labeling scheme of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassScheme {
    /// D+S+T vs S+T.
    TwoClass,
    ThreeClass(ThreeClassVariant),
    /// One class per scaling-equivalence class of grid weight triples.
    NinetyOneClass,
}

impl ClassScheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "2" | "two" => Ok(ClassScheme::TwoClass),
            "91" => Ok(ClassScheme::NinetyOneClass),
            other => {
                if let Some(v) = other.strip_prefix("3:") {
                    Ok(ClassScheme::ThreeClass(ThreeClassVariant::parse(v)?))
                } else if other == "3" {
                    Ok(ClassScheme::ThreeClass(ThreeClassVariant::DstVsStVsT))
                } else {
                    Err(Error::Config(format!("unknown class scheme `{other}`")))
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            ClassScheme::TwoClass => "two".into(),
            ClassScheme::ThreeClass(v) => format!("3:{}", v.name()),
            ClassScheme::NinetyOneClass => "91".into(),
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            ClassScheme::TwoClass => 2,
            ClassScheme::ThreeClass(_) => 3,
            ClassScheme::NinetyOneClass => 91,
        }
    }

    /// Component recipes per class. For the 91-class scheme the recipe
    /// follows the non-zero entries of each representative triple.
    pub fn recipes(&self) -> Vec<ClassRecipe> {
        match self {
            ClassScheme::TwoClass => vec![
                ClassRecipe { use_d: true, use_s: true, use_t: true },
                ClassRecipe { use_d: false, use_s: true, use_t: true },
            ],
            ClassScheme::ThreeClass(v) => v.recipes().to_vec(),
            ClassScheme::NinetyOneClass => enumerate_weight_classes()
                .iter()
                .map(|w| ClassRecipe {
                    use_d: w.alpha > 0.0,
                    use_s: w.beta > 0.0,
                    use_t: w.gamma > 0.0,
                })
                .collect(),
        }
    }

    /// Index of the class that carries deformation (always 0 by layout).
    pub fn deformation_class(&self) -> usize {
        0
    }

    /// Decision threshold on the deformation probability.
    pub fn threshold(&self) -> f64 {
        match self {
            ClassScheme::ThreeClass(_) => 1.0 / 3.0,
            _ => 0.5,
        }
    }
}

/// A balanced, labeled set of grayscale patches plus its generation record.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub patch_size: usize,
    pub n_classes: usize,
    pub patches: Vec<Raster>,
    pub labels: Vec<usize>,
    pub manifest: String,
    pub train_fraction: f64,
}

impl LabeledDataset {
    /// Deterministic per-class split into (train, validation) index lists.
    pub fn split_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut per_class_seen = vec![0usize; self.n_classes];
        let class_total = self.labels.iter().filter(|&&l| l == 0).count().max(1);
        let n_train = ((class_total as f64) * self.train_fraction).round() as usize;
        for (i, &l) in self.labels.iter().enumerate() {
            if per_class_seen[l] < n_train {
                train.push(i);
            } else {
                val.push(i);
            }
            per_class_seen[l] += 1;
        }
        (train, val)
    }

    /// Serialize to a single packed file: header, manifest text, u8 patch
    /// payload, u16 labels. Little-endian throughout.
    pub fn write_file(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"IPCK")?;
        f.write_all(&1u16.to_le_bytes())?;
        f.write_all(&(self.patch_size as u32).to_le_bytes())?;
        f.write_all(&(self.n_classes as u32).to_le_bytes())?;
        f.write_all(&(self.patches.len() as u32).to_le_bytes())?;
        let spacing = self.patches.first().map_or(1.0, |p| p.spacing_m());
        f.write_all(&spacing.to_le_bytes())?;
        f.write_all(&self.train_fraction.to_le_bytes())?;
        f.write_all(&(self.manifest.len() as u64).to_le_bytes())?;
        f.write_all(self.manifest.as_bytes())?;
        for p in &self.patches {
            let bytes: Vec<u8> = p.values().iter().map(|&v| v as u8).collect();
            f.write_all(&bytes)?;
        }
        for &l in &self.labels {
            f.write_all(&(l as u16).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != b"IPCK" {
            return Err(Error::Format("not a packed dataset file".into()));
        }
        let mut b2 = [0u8; 2];
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        f.read_exact(&mut b2)?;
        if u16::from_le_bytes(b2) != 1 {
            return Err(Error::Format("unsupported dataset file version".into()));
        }
        f.read_exact(&mut b4)?;
        let patch_size = u32::from_le_bytes(b4) as usize;
        f.read_exact(&mut b4)?;
        let n_classes = u32::from_le_bytes(b4) as usize;
        f.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        f.read_exact(&mut b8)?;
        let spacing = f64::from_le_bytes(b8);
        f.read_exact(&mut b8)?;
        let train_fraction = f64::from_le_bytes(b8);
        f.read_exact(&mut b8)?;
        let mlen = u64::from_le_bytes(b8) as usize;
        let mut mbytes = vec![0u8; mlen];
        f.read_exact(&mut mbytes)?;
        let manifest = String::from_utf8(mbytes)
            .map_err(|_| Error::Format("dataset manifest is not valid UTF-8".into()))?;
        let mut patches = Vec::with_capacity(n);
        let mut buf = vec![0u8; patch_size * patch_size];
        for _ in 0..n {
            f.read_exact(&mut buf)?;
            let values = buf.iter().map(|&b| b as f64).collect();
            patches.push(Raster::new(patch_size, patch_size, spacing, Unit::GrayU8, values)?);
        }
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            f.read_exact(&mut b2)?;
            labels.push(u16::from_le_bytes(b2) as usize);
        }
        Ok(LabeledDataset { patch_size, n_classes, patches, labels, manifest, train_fraction })
    }
}

/// splitmix64: cheap, well-mixed derivation of per-sample seeds.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E3779B97F4A7C15);
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Central crop of a raster to `size` x `size`.
pub fn central_crop(r: &Raster, size: usize) -> Result<Raster> {
    if size > r.width() || size > r.height() {
        return Err(Error::InvalidDataset(format!(
            "crop size {size} exceeds raster {}x{}",
            r.width(),
            r.height()
        )));
    }
    crop_at(r, size, (r.height() - size) / 2, (r.width() - size) / 2)
}

/// Crop of a raster to `size` x `size` with its top-left corner at (r0, c0).
pub fn crop_at(r: &Raster, size: usize, r0: usize, c0: usize) -> Result<Raster> {
    if r0 + size > r.height() || c0 + size > r.width() {
        return Err(Error::InvalidDataset(format!(
            "crop {size}x{size} at ({r0}, {c0}) exceeds raster {}x{}",
            r.width(),
            r.height()
        )));
    }
    let mut values = Vec::with_capacity(size * size);
    for row in r0..r0 + size {
        for col in c0..c0 + size {
            values.push(r.get(row, col));
        }
    }
    Raster::new(size, size, r.spacing_m(), r.unit(), values)
}

/// One fully synthesized scene: components as unwrapped phase plus a
/// human-readable provenance line.
pub struct SceneComponents {
    pub d: Raster,
    pub s: Raster,
    pub t: Raster,
    pub geom: crate::grid::LosGeometry,
    pub source: crate::deform::SourceModel,
    pub provenance: String,
}

/// Draw a deformation source, DEM-driven stratified screen and turbulent
/// screen for one scene, deterministically from `seed`.
pub fn sample_components(
    seed: u64,
    grid: &GridShape,
    kind: Option<SourceKind>,
) -> Result<SceneComponents> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xC0));
    let kind = kind.unwrap_or_else(|| {
        SourceKind::ALL[rng.gen_range(0..SourceKind::ALL.len())]
    });
    let (src, geom) = sample_source(derive_seed(seed, 0xD0), kind, grid);
    let d = render_deformation(&src, &ElasticMedium::crustal(), &geom, grid)?;

    let dem_kind = if rng.gen_bool(0.5) { DemKind::Cone } else { DemKind::Shield };
    let peak = rng.gen_range(800.0..2400.0);
    let dem = synth_dem(dem_kind, peak, grid, derive_seed(seed, 0xE0))?;
    let slope = crate::atmos::sample_stratified_slope(&mut rng);
    let s = synth_stratified(
        &StratifiedModel::LinearElevation { dem, slope_rad_per_km: slope },
        &geom,
    )?;

    let cov = CovarianceParams::sample(&mut rng);
    // circulant backend: scene generation synthesizes one field per draw,
    // so the dense factorization would be recomputed every time
    let t = TurbulenceSynth::with_backend(&cov, grid, TurbBackend::Circulant)?
        .realize(derive_seed(seed, 0xF0));

    let provenance = format!(
        "kind={} src={:?} geom=({},{}) dem={:?}/{:.1} slope={:.4} cov=({:.4},{:.4})",
        kind.name(),
        src,
        geom.incidence_deg(),
        geom.heading_deg(),
        dem_kind,
        peak,
        slope,
        cov.sigma2_max_mm2,
        cov.efold_km
    );
    Ok(SceneComponents { d, s, t, geom, source: src, provenance })
}

/// Build a balanced labeled dataset of wrapped, quantized patches.
pub fn build_dataset(
    scheme: &ClassScheme,
    n_per_class: usize,
    grid: &GridShape,
    patch_size: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_per_class < 2 {
        return Err(Error::InvalidDataset("need at least 2 samples per class".into()));
    }
    if patch_size > grid.width || patch_size > grid.height {
        return Err(Error::InvalidDataset(format!(
            "patch size {patch_size} exceeds grid {}x{}",
            grid.width, grid.height
        )));
    }
    let recipes = scheme.recipes();
    let reps = if matches!(scheme, ClassScheme::NinetyOneClass) {
        Some(enumerate_weight_classes())
    } else {
        None
    };
    let mut patches = Vec::with_capacity(recipes.len() * n_per_class);
    let mut labels = Vec::with_capacity(recipes.len() * n_per_class);
    let mut manifest = String::new();
    manifest.push_str(&format!(
        "scheme = {}\nseed = {}\ngrid = {}x{} @ {}\npatch = {}\nn_per_class = {}\n",
        scheme.name(),
        seed,
        grid.width,
        grid.height,
        grid.spacing_m,
        patch_size,
        n_per_class
    ));
    for (class, recipe) in recipes.iter().enumerate() {
        for i in 0..n_per_class {
            let sample_seed = derive_seed(seed, (class * n_per_class + i) as u64 + 1);
            let mut scene = sample_components(sample_seed, grid, None)?;
            let w = match &reps {
                Some(reps) => reps[class],
                None => {
                    let mut wrng = ChaCha8Rng::seed_from_u64(derive_seed(sample_seed, 0xAA));
                    let mut draw = |used: bool| if used { wrng.gen_range(0.0..=1.0) } else { 0.0 };
                    let mut alpha = draw(recipe.use_d);
                    let beta = draw(recipe.use_s);
                    let gamma = draw(recipe.use_t);
                    // the deformation component must actually be present,
                    // and the mixture must be non-degenerate
                    if recipe.use_d {
                        while alpha <= 1e-3 {
                            alpha = wrng.gen_range(0.0..=1.0);
                        }
                    }
                    let mut t = WeightTriple { alpha, beta, gamma };
                    if t.is_zero() {
                        // degenerate draw: fall back to equal weights on the
                        // recipe's components
                        t = WeightTriple {
                            alpha: if recipe.use_d { 1.0 } else { 0.0 },
                            beta: if recipe.use_s { 1.0 } else { 0.0 },
                            gamma: if recipe.use_t { 1.0 } else { 0.0 },
                        };
                    }
                    t
                }
            };
            // the training patch is a randomly placed window, matching how
            // the sliding-window detector sees scenes
            let mut crng = ChaCha8Rng::seed_from_u64(derive_seed(sample_seed, 0xCB));
            let r0 = crng.gen_range(0..=grid.height - patch_size);
            let c0 = crng.gen_range(0..=grid.width - patch_size);
            // deformation-class samples must actually show their label: scale
            // the source up (deformation is linear in source strength) until
            // the weighted deformation term spans at least one fringe within
            // the cropped window
            if w.alpha > 0.0 {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for row in r0..r0 + patch_size {
                    for col in c0..c0 + patch_size {
                        let v = scene.d.get(row, col);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                let sum = w.alpha + w.beta + w.gamma;
                let span = (hi - lo) * w.alpha / sum;
                let floor = 2.0 * std::f64::consts::PI;
                if span > 0.0 && span < floor {
                    let boost = floor / span;
                    let vals: Vec<f64> =
                        scene.d.values().iter().map(|&v| v * boost).collect();
                    scene.d = scene.d.with_values(scene.d.unit(), vals)?;
                }
            }
            let composed = compose_interferogram(&scene.d, &scene.s, &scene.t, &w)?;
            let wrapped = wrap_phase(&composed)?;
            let cropped = crop_at(&wrapped, patch_size, r0, c0)?;
            let gray = quantize_grayscale(&cropped, true)?;
            manifest.push_str(&format!(
                "sample {} class={} seed={} weights=({:.6},{:.6},{:.6}) {}\n",
                class * n_per_class + i,
                class,
                sample_seed,
                w.alpha,
                w.beta,
                w.gamma,
                scene.provenance
            ));
            patches.push(gray);
            labels.push(class);
        }
    }
    Ok(LabeledDataset {
        patch_size,
        n_classes: recipes.len(),
        patches,
        labels,
        manifest,
        train_fraction: 0.8,
    })
}

/// Sliding-window patch positions: floor((extent - patch) / stride) + 1
/// multiples of `stride`, with the final one snapped to the image edge so
/// coverage is complete.
pub fn patch_positions(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = extent - patch;
    let n = last / stride + 1;
    let mut xs: Vec<usize> = (0..n).map(|i| i * stride).collect();
    *xs.last_mut().unwrap() = last;
    xs
}

/// Extract overlapping patches with their (col, row) top-left positions.
pub fn extract_patches(
    img: &Raster,
    patch: usize,
    stride: usize,
) -> Result<Vec<(Raster, (usize, usize))>> {
    if patch == 0 || patch > img.width() || patch > img.height() {
        return Err(Error::InvalidDataset(format!(
            "patch size {patch} invalid for {}x{} image",
            img.width(),
            img.height()
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidDataset("stride must be at least 1".into()));
    }
    let cols = patch_positions(img.width(), patch, stride);
    let rows = patch_positions(img.height(), patch, stride);
    let mut out = Vec::with_capacity(cols.len() * rows.len());
    for &r0 in &rows {
        for &c0 in &cols {
            let mut values = Vec::with_capacity(patch * patch);
            for row in r0..r0 + patch {
                for col in c0..c0 + patch {
                    values.push(img.get(row, col));
                }
            }
            out.push((
                Raster::new(patch, patch, img.spacing_m(), img.unit(), values)?,
                (c0, r0),
            ));
        }
    }
    Ok(out)
}

/// Label-preserving geometric augmentations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentOp {
    FlipH,
    FlipV,
    Rot90,
    Rot180,
    Rot270,
    /// Shift by (dx, dy) pixels (positive = right/down); exposed margins are
    /// filled by reflection.
    Shift(i32, i32),
}

/// Apply one augmentation; square patches only for rotations.
pub fn augment_patch(patch: &Raster, op: AugmentOp) -> Result<Raster> {
    let (w, h) = (patch.width(), patch.height());
    let get = |row: usize, col: usize| patch.get(row, col);
    let values: Vec<f64> = match op {
        AugmentOp::FlipH => (0..h)
            .flat_map(|r| (0..w).rev().map(move |c| (r, c)))
            .map(|(r, c)| get(r, c))
            .collect(),
        AugmentOp::FlipV => (0..h)
            .rev()
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| get(r, c))
            .collect(),
        AugmentOp::Rot90 | AugmentOp::Rot180 | AugmentOp::Rot270 => {
            if w != h {
                return Err(Error::InvalidDataset("rotations require square patches".into()));
            }
            let n = w;
            let idx: Box<dyn Fn(usize, usize) -> (usize, usize)> = match op {
                // 90 degrees counter-clockwise: out(r,c) = in(c, n-1-r)
                AugmentOp::Rot90 => Box::new(move |r, c| (c, n - 1 - r)),
                AugmentOp::Rot180 => Box::new(move |r, c| (n - 1 - r, n - 1 - c)),
                AugmentOp::Rot270 => Box::new(move |r, c| (n - 1 - c, r)),
                _ => unreachable!(),
            };
            (0..n)
                .flat_map(|r| (0..n).map(move |c| (r, c)))
                .map(|(r, c)| {
                    let (sr, sc) = idx(r, c);
                    get(sr, sc)
                })
                .collect()
        }
        AugmentOp::Shift(dx, dy) => {
            let limit = (w.min(h) / 4) as i32;
            if dx.abs() >= limit || dy.abs() >= limit {
                return Err(Error::InvalidDataset(format!(
                    "shift ({dx},{dy}) must be smaller than a quarter patch"
                )));
            }
            let reflect = |i: i64, n: i64| -> usize {
                let mut i = i;
                if i < 0 {
                    i = -i - 1;
                }
                if i >= n {
                    i = 2 * n - 1 - i;
                }
                i.clamp(0, n - 1) as usize
            };
            (0..h as i64)
                .flat_map(|r| (0..w as i64).map(move |c| (r, c)))
                .map(|(r, c)| {
                    let sr = reflect(r - dy as i64, h as i64);
                    let sc = reflect(c - dx as i64, w as i64);
                    get(sr, sc)
                })
                .collect()
        }
    };
    let (ow, oh) = match op {
        AugmentOp::Rot90 | AugmentOp::Rot270 => (h, w),
        _ => (w, h),
    };
    Raster::new(ow, oh, patch.spacing_m(), patch.unit(), values)
}

/// One classified patch with its ground truth, as consumed by
/// [`select_retrain_patches`].
#[derive(Debug, Clone)]
pub struct PatchObservation {
    /// Top-left (col, row) of the patch in the source image.
    pub position: (usize, usize),
    pub patch: Raster,
    /// Per-class probabilities from the classifier.
    pub probs: Vec<f64>,
    /// Whether the scene truly contains deformation at this patch.
    pub deforming: bool,
}

/// Additional labeled patches selected from detection results.
#[derive(Debug, Clone)]
pub struct RetrainDelta {
    pub patches: Vec<Raster>,
    pub labels: Vec<usize>,
    /// Effective top-left positions; guaranteed disjoint from every input
    /// observation position.
    pub positions: Vec<(usize, usize)>,
}

/// Select patches for retraining from classified observations.
///
/// Ground-truth deforming patches (hits and misses alike) reinforce the
/// deformation class; false alarms are relabeled to the atmosphere class.
/// In the 91-class scheme false alarms are assigned to the alpha = 0 class
/// whose (beta, gamma) best matches the turbulence strength estimated from
/// the patch itself. Selected patch content is pixel-shifted (reflection
/// fill) so no retraining patch coincides with a test patch.
pub fn select_retrain_patches(
    observations: &[PatchObservation],
    scheme: &ClassScheme,
) -> Result<RetrainDelta> {
    let mut delta = RetrainDelta { patches: Vec::new(), labels: Vec::new(), positions: Vec::new() };
    if observations.is_empty() {
        return Ok(delta);
    }
    let taken: HashSet<(usize, usize)> = observations.iter().map(|o| o.position).collect();
    let free_position = |mut pos: (usize, usize)| -> (usize, usize) {
        while taken.contains(&pos) {
            pos.0 += 1;
        }
        pos
    };
    let reps = enumerate_weight_classes();
    let threshold = scheme.threshold();
    let push = |delta: &mut RetrainDelta, obs: &PatchObservation, label: usize| -> Result<()> {
        let shift = (obs.patch.width() / 8).max(1) as i32;
        let shifted = augment_patch(&obs.patch, AugmentOp::Shift(shift, shift))?;
        delta.patches.push(shifted);
        delta.labels.push(label);
        delta
            .positions
            .push(free_position((obs.position.0 + shift as usize, obs.position.1 + shift as usize)));
        Ok(())
    };
    for obs in observations {
        if obs.probs.len() != scheme.class_count() {
            return Err(Error::InvalidDataset(format!(
                "observation has {} probabilities for a {}-class scheme",
                obs.probs.len(),
                scheme.class_count()
            )));
        }
        match scheme {
            ClassScheme::TwoClass | ClassScheme::ThreeClass(_) => {
                let p_deform = obs.probs[0];
                if obs.deforming {
                    // true positives and missed detections both reinforce
                    // the deformation class
                    push(&mut delta, obs, 0)?;
                } else if p_deform > threshold {
                    // false alarm: relabel to the (first) atmosphere class
                    push(&mut delta, obs, 1)?;
                }
            }
            ClassScheme::NinetyOneClass => {
                if obs.deforming {
                    let label = reps
                        .iter()
                        .position(|r| *r == WeightTriple { alpha: 1.0, beta: 0.0, gamma: 0.0 })
                        .expect("(1,0,0) is always a class representative");
                    push(&mut delta, obs, label)?;
                } else {
                    // flagged as deformation-dominant?
                    let w = estimate_weights_from_probs(&obs.probs, &reps);
                    if w.alpha > w.beta && w.alpha > w.gamma {
                        let phase = gray_to_phase(&obs.patch)?;
                        let est = estimate_cov_params(&phase)?;
                        let gamma_j = ((est.sigma2_max_mm2 - 5.0) / 4.0).clamp(0.0, 1.0);
                        let label = argmin_alpha_zero_class(&reps, gamma_j);
                        push(&mut delta, obs, label)?;
                    }
                }
            }
        }
    }
    // three-class retraining balances the pure-turbulence class with fresh
    // synthetic T patches matched to the covariance of the false alarms
    if let ClassScheme::ThreeClass(_) = scheme {
        let fp: Vec<&PatchObservation> = observations
            .iter()
            .filter(|o| !o.deforming && o.probs[0] > threshold)
            .collect();
        if !fp.is_empty() {
            let per_class: Vec<usize> =
                (0..3).map(|c| delta.labels.iter().filter(|&&l| l == c).count()).collect();
            let target = *per_class.iter().take(2).max().unwrap();
            let patch_size = fp[0].patch.width();
            let grid = GridShape::of(&fp[0].patch);
            let mut i = 0usize;
            while delta.labels.iter().filter(|&&l| l == 2).count() < target {
                let src = fp[i % fp.len()];
                let phase = gray_to_phase(&src.patch)?;
                let est = estimate_cov_params(&phase)?;
                let params = CovarianceParams::new(
                    est.sigma2_max_mm2.max(1e-3),
                    if est.degenerate || !est.efold_km.is_finite() {
                        8.0
                    } else {
                        est.efold_km.max(0.1)
                    },
                )?;
                let t = TurbulenceSynth::with_backend(&params, &grid, TurbBackend::Circulant)?
                    .realize(derive_seed(0x7_5EED, i as u64));
                let gray = quantize_grayscale(&wrap_phase(&t)?, true)?;
                delta.patches.push(gray);
                delta.labels.push(2);
                delta.positions.push(free_position((i, patch_size + i)));
                i += 1;
            }
        }
    }
    Ok(delta)
}

/// Weighted-sum decomposition of a probability vector into component
/// weights: w = sum over classes of w_c * P_c.
pub fn estimate_weights_from_probs(probs: &[f64], reps: &[WeightTriple]) -> WeightTriple {
    let mut out = [0.0f64; 3];
    for (p, r) in probs.iter().zip(reps) {
        let a = r.as_array();
        for k in 0..3 {
            out[k] += p * a[k];
        }
    }
    WeightTriple { alpha: out[0], beta: out[1], gamma: out[2] }
}

/// Among classes with alpha = 0, the one minimizing
/// (1 - gamma_j - beta_c)^2 + (gamma_j - gamma_c)^2, ties to lower index.
fn argmin_alpha_zero_class(reps: &[WeightTriple], gamma_j: f64) -> usize {
    let mut best = (f64::INFINITY, 0usize);
    for (i, r) in reps.iter().enumerate() {
        if r.alpha != 0.0 {
            continue;
        }
        let cost = (1.0 - gamma_j - r.beta).powi(2) + (gamma_j - r.gamma).powi(2);
        if cost < best.0 {
            best = (cost, i);
        }
    }
    best.1
}
