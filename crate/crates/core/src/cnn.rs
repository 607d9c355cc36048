//! A compact convolutional classifier trained from scratch: five
//! convolutions (max-pooling after the first, second and fifth) followed by
//! three fully connected layers, ReLU activations and a softmax output.

use crate::error::{Error, Result};
use crate::grid::{Raster, Unit};
use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{Read, Write};

/// One layer of the fixed topology. Parameter tensors live in the model's
/// flat parameter vector at the recorded offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
enum LayerSpec {
    /// Same-padded stride-1 convolution with ReLU; weights are stored as an
    /// (out_ch, in_ch * k * k) matrix for im2col matrix products.
    Conv { in_ch: usize, out_ch: usize, k: usize, side: usize, w_off: usize, b_off: usize },
    /// 2x2 max pooling with stride 2.
    Pool { ch: usize, side: usize },
    /// Fully connected; ReLU unless this is the final logits layer.
    Fc { n_in: usize, n_out: usize, w_off: usize, b_off: usize, relu: bool },
}

/// The classifier: topology metadata plus one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    input_side: usize,
    n_classes: usize,
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
}

/// Supported input patch sides.
pub const SUPPORTED_SIDES: [usize; 3] = [64, 128, 224];
/// Supported class counts.
pub const SUPPORTED_CLASSES: [usize; 4] = [2, 3, 5, 91];

/// Gray levels are mapped to a symmetric zero-centered range before the
/// first convolution.
pub fn normalize_gray(g: f64) -> f64 {
    (g - 127.5) / 127.5
}

impl CnnModel {
    /// Build the fixed topology with seeded scaled-normal (He) weights.
    pub fn init(input_side: usize, n_classes: usize, seed: u64) -> Result<Self> {
        if !SUPPORTED_SIDES.contains(&input_side) {
            return Err(Error::Model(format!(
                "unsupported input side {input_side}; expected one of {SUPPORTED_SIDES:?}"
            )));
        }
        if !SUPPORTED_CLASSES.contains(&n_classes) {
            return Err(Error::Model(format!(
                "unsupported class count {n_classes}; expected one of {SUPPORTED_CLASSES:?}"
            )));
        }
        let mut layers = Vec::new();
        let mut off = 0usize;
        let mut side = input_side;
        let mut ch = 1usize;
        // pool early: the deep 32-channel convolutions run at 8x8 instead of
        // 16x16, halving the conv flops for the same flattened feature size
        let conv_plan: [(usize, usize, bool); 5] = [
            (8, 5, true),
            (16, 3, true),
            (32, 3, true),
            (32, 3, false),
            (32, 3, false),
        ];
        for (out_ch, k, pool_after) in conv_plan {
            let w_off = off;
            off += out_ch * ch * k * k;
            let b_off = off;
            off += out_ch;
            layers.push(LayerSpec::Conv { in_ch: ch, out_ch, k, side, w_off, b_off });
            ch = out_ch;
            if pool_after {
                layers.push(LayerSpec::Pool { ch, side });
                side /= 2;
            }
        }
        let mut n_in = ch * side * side;
        for (i, n_out) in [256usize, 128, n_classes].into_iter().enumerate() {
            let w_off = off;
            off += n_out * n_in;
            let b_off = off;
            off += n_out;
            layers.push(LayerSpec::Fc { n_in, n_out, w_off, b_off, relu: i < 2 });
            n_in = n_out;
        }
        let mut params = vec![0.0; off];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &layers {
            let (w_off, b_off, fan_in, n_w) = match *layer {
                LayerSpec::Conv { in_ch, out_ch, k, w_off, b_off, .. } => {
                    (w_off, b_off, in_ch * k * k, out_ch * in_ch * k * k)
                }
                LayerSpec::Fc { n_in, n_out, w_off, b_off, .. } => {
                    (w_off, b_off, n_in, n_out * n_in)
                }
                LayerSpec::Pool { .. } => continue,
            };
            let std = (2.0 / fan_in as f64).sqrt();
            for p in &mut params[w_off..w_off + n_w] {
                let z: f64 = rng.sample(StandardNormal);
                *p = z * std;
            }
            // biases stay zero; b_off..b_off+n already zeroed
            let _ = b_off;
        }
        Ok(CnnModel { input_side, n_classes, layers, params })
    }

    pub fn input_side(&self) -> usize {
        self.input_side
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param(&self, i: usize) -> f64 {
        self.params[i]
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        self.params[i] = v;
    }

    fn w_view(&self, off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.params[off..off + rows * cols]).unwrap()
    }

    /// Forward pass keeping the intermediates needed for backpropagation.
    fn forward(&self, input: &Array2<f64>, keep: bool) -> (Array1<f64>, ForwardCache) {
        let mut cache = ForwardCache::default();
        let mut act2 = input.clone(); // (ch, side*side) through the conv stack
        let mut act1: Option<Array1<f64>> = None; // through the fc stack
        for layer in &self.layers {
            match *layer {
                LayerSpec::Conv { in_ch, out_ch, k, side, w_off, b_off } => {
                    let cols = im2col(&act2, in_ch, side, k);
                    let w = self.w_view(w_off, out_ch, in_ch * k * k);
                    let mut pre = w.dot(&cols);
                    for (c, mut row) in pre.outer_iter_mut().enumerate() {
                        row += self.params[b_off + c];
                    }
                    let post = pre.mapv(|v| v.max(0.0));
                    if keep {
                        cache.conv_cols.push(cols);
                        cache.conv_pre.push(pre);
                    }
                    act2 = post;
                }
                LayerSpec::Pool { ch, side } => {
                    let (out, arg) = max_pool2(&act2, ch, side);
                    if keep {
                        cache.pool_arg.push(arg);
                    }
                    act2 = out;
                }
                LayerSpec::Fc { n_in, n_out, w_off, b_off, relu } => {
                    let x = match &act1 {
                        Some(v) => v.clone(),
                        None => {
                            let flat =
                                Array1::from_iter(act2.iter().copied());
                            debug_assert_eq!(flat.len(), n_in);
                            flat
                        }
                    };
                    let w = self.w_view(w_off, n_out, n_in);
                    let mut pre = w.dot(&x);
                    for (j, v) in pre.iter_mut().enumerate() {
                        *v += self.params[b_off + j];
                    }
                    let post = if relu { pre.mapv(|v| v.max(0.0)) } else { pre.clone() };
                    if keep {
                        cache.fc_inputs.push(x);
                        cache.fc_pre.push(pre);
                    }
                    act1 = Some(post);
                }
            }
        }
        (act1.expect("topology ends in an fc layer"), cache)
    }

    /// Softmax class probabilities for one normalized input.
    fn probs_from_input(&self, input: &Array2<f64>) -> Array1<f64> {
        let (logits, _) = self.forward(input, false);
        softmax(&logits)
    }

    /// Class probabilities for a grayscale patch.
    pub fn predict_proba(&self, patch: &Raster) -> Result<Vec<f64>> {
        let input = self.patch_to_input(patch)?;
        Ok(self.probs_from_input(&input).to_vec())
    }

    fn patch_to_input(&self, patch: &Raster) -> Result<Array2<f64>> {
        patch.expect_unit(Unit::GrayU8)?;
        if patch.width() != self.input_side || patch.height() != self.input_side {
            return Err(Error::Model(format!(
                "patch is {}x{} but the model expects {side}x{side}",
                patch.width(),
                patch.height(),
                side = self.input_side
            )));
        }
        let values: Vec<f64> = patch.values().iter().map(|&g| normalize_gray(g)).collect();
        Ok(Array2::from_shape_vec((1, values.len()), values).unwrap())
    }

    /// Cross-entropy loss and flat parameter gradient for one sample.
    fn loss_and_grad(&self, input: &Array2<f64>, label: usize) -> (f64, Vec<f64>) {
        let (logits, cache) = self.forward(input, true);
        let p = softmax(&logits);
        let loss = -p[label].max(1e-300).ln();
        let mut grad = vec![0.0; self.params.len()];
        // fused softmax cross-entropy gradient
        let mut d1: Array1<f64> = p;
        d1[label] -= 1.0;
        let mut d2: Option<Array2<f64>> = None;
        let mut fc_i = cache.fc_inputs.len();
        let mut conv_i = cache.conv_cols.len();
        let mut pool_i = cache.pool_arg.len();
        for layer in self.layers.iter().rev() {
            match *layer {
                LayerSpec::Fc { n_in, n_out, w_off, b_off, relu } => {
                    fc_i -= 1;
                    let mut dy = d1;
                    if relu {
                        let pre = &cache.fc_pre[fc_i];
                        for (g, &z) in dy.iter_mut().zip(pre) {
                            if z <= 0.0 {
                                *g = 0.0;
                            }
                        }
                    }
                    let x = &cache.fc_inputs[fc_i];
                    for j in 0..n_out {
                        grad[b_off + j] += dy[j];
                        let row = &mut grad[w_off + j * n_in..w_off + (j + 1) * n_in];
                        let dyj = dy[j];
                        for (gw, &xv) in row.iter_mut().zip(x.iter()) {
                            *gw += dyj * xv;
                        }
                    }
                    let w = self.w_view(w_off, n_out, n_in);
                    d1 = w.t().dot(&dy);
                    if fc_i == 0 {
                        // unflatten into the last conv activation shape
                        let (ch, npix) = self.flatten_shape();
                        d2 = Some(
                            Array2::from_shape_vec((ch, npix), d1.to_vec()).unwrap(),
                        );
                        d1 = Array1::zeros(0);
                    }
                }
                LayerSpec::Pool { ch, side } => {
                    pool_i -= 1;
                    let dy = d2.take().unwrap();
                    let arg = &cache.pool_arg[pool_i];
                    let mut dx = Array2::zeros((ch, side * side));
                    for c in 0..ch {
                        for (o, &src) in arg[c].iter().enumerate() {
                            dx[(c, src)] += dy[(c, o)];
                        }
                    }
                    d2 = Some(dx);
                }
                LayerSpec::Conv { in_ch, out_ch, k, side, w_off, b_off } => {
                    conv_i -= 1;
                    let mut dy = d2.take().unwrap();
                    let pre = &cache.conv_pre[conv_i];
                    for (g, &z) in dy.iter_mut().zip(pre.iter()) {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    let cols = &cache.conv_cols[conv_i];
                    let dw = dy.dot(&cols.t()); // (out_ch, in_ch*k*k)
                    for (i, &v) in dw.iter().enumerate() {
                        grad[w_off + i] += v;
                    }
                    for c in 0..out_ch {
                        grad[b_off + c] += dy.row(c).sum();
                    }
                    if conv_i > 0 {
                        let w = self.w_view(w_off, out_ch, in_ch * k * k);
                        let dcols = w.t().dot(&dy);
                        d2 = Some(col2im(&dcols, in_ch, side, k));
                    }
                }
            }
        }
        (loss, grad)
    }

    fn flatten_shape(&self) -> (usize, usize) {
        // channel count and pixel count of the last conv-stack activation
        let mut ch = 1usize;
        let mut side = self.input_side;
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv { out_ch, .. } => ch = *out_ch,
                LayerSpec::Pool { .. } => side /= 2,
                LayerSpec::Fc { .. } => break,
            }
        }
        (ch, side * side)
    }

    /// Serialize: header, little-endian f32 parameters, history appendix.
    pub fn write_file(&self, path: &std::path::Path, history: &[EpochStats]) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"IMDL")?;
        f.write_all(&1u16.to_le_bytes())?;
        f.write_all(&(self.input_side as u32).to_le_bytes())?;
        f.write_all(&(self.n_classes as u32).to_le_bytes())?;
        f.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for &p in &self.params {
            f.write_all(&(p as f32).to_le_bytes())?;
        }
        f.write_all(&(history.len() as u32).to_le_bytes())?;
        for h in history {
            for v in [h.train_loss, h.train_accuracy, h.val_loss, h.val_accuracy] {
                f.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<(Self, Vec<EpochStats>)> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != b"IMDL" {
            return Err(Error::Format("not a model file".into()));
        }
        let mut b2 = [0u8; 2];
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        f.read_exact(&mut b2)?;
        if u16::from_le_bytes(b2) != 1 {
            return Err(Error::Format("unsupported model file version".into()));
        }
        f.read_exact(&mut b4)?;
        let input_side = u32::from_le_bytes(b4) as usize;
        f.read_exact(&mut b4)?;
        let n_classes = u32::from_le_bytes(b4) as usize;
        f.read_exact(&mut b8)?;
        let n_params = u64::from_le_bytes(b8) as usize;
        let mut model = CnnModel::init(input_side, n_classes, 0)?;
        if model.params.len() != n_params {
            return Err(Error::Format(format!(
                "model file has {} parameters; topology expects {}",
                n_params,
                model.params.len()
            )));
        }
        for p in &mut model.params {
            f.read_exact(&mut b4)?;
            *p = f32::from_le_bytes(b4) as f64;
        }
        f.read_exact(&mut b4)?;
        let n_hist = u32::from_le_bytes(b4) as usize;
        let mut history = Vec::with_capacity(n_hist);
        for _ in 0..n_hist {
            let mut vals = [0.0f64; 4];
            for v in &mut vals {
                f.read_exact(&mut b4)?;
                *v = f32::from_le_bytes(b4) as f64;
            }
            history.push(EpochStats {
                train_loss: vals[0],
                train_accuracy: vals[1],
                val_loss: vals[2],
                val_accuracy: vals[3],
            });
        }
        Ok((model, history))
    }
}

#[derive(Default)]
struct ForwardCache {
    conv_cols: Vec<Array2<f64>>,
    conv_pre: Vec<Array2<f64>>,
    pool_arg: Vec<Vec<Vec<usize>>>,
    fc_inputs: Vec<Array1<f64>>,
    fc_pre: Vec<Array1<f64>>,
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|v| (v - m).exp());
    let sum = exp.sum();
    exp / sum
}

/// Unroll a (ch, side*side) activation into (ch*k*k, side*side) patches,
/// zero-padded so output resolution equals input resolution.
fn im2col(x: &Array2<f64>, ch: usize, side: usize, k: usize) -> Array2<f64> {
    let pad = k / 2;
    let mut cols = Array2::zeros((ch * k * k, side * side));
    for c in 0..ch {
        for dr in 0..k {
            for dc in 0..k {
                let row = c * k * k + dr * k + dc;
                for r in 0..side {
                    let sr = r as isize + dr as isize - pad as isize;
                    if sr < 0 || sr >= side as isize {
                        continue;
                    }
                    for cc in 0..side {
                        let sc = cc as isize + dc as isize - pad as isize;
                        if sc < 0 || sc >= side as isize {
                            continue;
                        }
                        cols[(row, r * side + cc)] = x[(c, sr as usize * side + sc as usize)];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add column gradients back to the input.
fn col2im(dcols: &Array2<f64>, ch: usize, side: usize, k: usize) -> Array2<f64> {
    let pad = k / 2;
    let mut dx = Array2::zeros((ch, side * side));
    for c in 0..ch {
        for dr in 0..k {
            for dc in 0..k {
                let row = c * k * k + dr * k + dc;
                for r in 0..side {
                    let sr = r as isize + dr as isize - pad as isize;
                    if sr < 0 || sr >= side as isize {
                        continue;
                    }
                    for cc in 0..side {
                        let sc = cc as isize + dc as isize - pad as isize;
                        if sc < 0 || sc >= side as isize {
                            continue;
                        }
                        dx[(c, sr as usize * side + sc as usize)] += dcols[(row, r * side + cc)];
                    }
                }
            }
        }
    }
    dx
}

/// 2x2 stride-2 max pooling; returns pooled activations and per-output
/// argmax positions (flat input indices) for gradient routing.
fn max_pool2(x: &Array2<f64>, ch: usize, side: usize) -> (Array2<f64>, Vec<Vec<usize>>) {
    let out_side = side / 2;
    let mut out = Array2::zeros((ch, out_side * out_side));
    let mut arg = vec![vec![0usize; out_side * out_side]; ch];
    for c in 0..ch {
        for r in 0..out_side {
            for cc in 0..out_side {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0usize;
                for dr in 0..2 {
                    for dc in 0..2 {
                        let i = (2 * r + dr) * side + 2 * cc + dc;
                        if x[(c, i)] > best {
                            best = x[(c, i)];
                            best_i = i;
                        }
                    }
                }
                out[(c, r * out_side + cc)] = best;
                arg[c][r * out_side + cc] = best_i;
            }
        }
    }
    (out, arg)
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub patience: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Learning-rate multiplier for the final fully connected layer, used
    /// when fine-tuning an existing model.
    pub final_layer_lr_mult: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 50,
            batch_size: 100,
            learning_rate: 1e-3,
            momentum: 0.9,
            patience: 5,
            seed: 0,
            validation_fraction: 0.2,
            final_layer_lr_mult: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.max_epochs > 50 {
            return Err(Error::Config(format!(
                "max_epochs must be in 1..=50, got {}",
                self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-epoch loss and accuracy on the training and validation splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Inputs to training: pre-normalized sample tensors plus labels.
struct PreparedSet {
    inputs: Vec<Array2<f64>>,
    labels: Vec<usize>,
}

fn prepare(model: &CnnModel, ds: &crate::dataset::LabeledDataset, idx: &[usize]) -> Result<PreparedSet> {
    let mut inputs = Vec::with_capacity(idx.len());
    let mut labels = Vec::with_capacity(idx.len());
    for &i in idx {
        inputs.push(model.patch_to_input(&ds.patches[i])?);
        labels.push(ds.labels[i]);
    }
    Ok(PreparedSet { inputs, labels })
}

fn evaluate(model: &CnnModel, set: &PreparedSet) -> (f64, f64) {
    if set.inputs.is_empty() {
        return (0.0, 0.0);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, &y) in set.inputs.iter().zip(&set.labels) {
        let p = model.probs_from_input(x);
        loss += -p[y].max(1e-300).ln();
        let pred = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        if pred == y {
            correct += 1;
        }
    }
    (loss / set.inputs.len() as f64, correct as f64 / set.inputs.len() as f64)
}

/// Mini-batch momentum SGD on mean cross-entropy with early stopping;
/// returns the best-validation snapshot and the full epoch history.
pub fn train(
    model: &CnnModel,
    ds: &crate::dataset::LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(CnnModel, Vec<EpochStats>)> {
    cfg.validate()?;
    if ds.n_classes < 2 {
        return Err(Error::InvalidDataset("training needs at least 2 classes".into()));
    }
    // deterministic per-class split: the leading (1 - validation_fraction)
    // of each class trains, the rest validates
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    let mut seen = vec![0usize; ds.n_classes];
    let class_total: Vec<usize> = (0..ds.n_classes)
        .map(|c| ds.labels.iter().filter(|&&l| l == c).count())
        .collect();
    for (i, &l) in ds.labels.iter().enumerate() {
        let n_train =
            ((class_total[l] as f64) * (1.0 - cfg.validation_fraction)).round() as usize;
        if seen[l] < n_train.max(1) {
            train_idx.push(i);
        } else {
            val_idx.push(i);
        }
        seen[l] += 1;
    }
    if val_idx.is_empty() {
        val_idx = train_idx.clone();
    }
    let train_set = prepare(model, ds, &train_idx)?;
    let val_set = prepare(model, ds, &val_idx)?;

    let mut current = model.clone();
    let lr_mult = final_layer_multipliers(&current, cfg.final_layer_lr_mult);
    let mut velocity = vec![0.0f64; current.params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history: Vec<EpochStats> = Vec::new();
    let mut best = current.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;

    let mut order: Vec<usize> = (0..train_set.inputs.len()).collect();
    for epoch in 0..cfg.max_epochs {
        // Fisher-Yates with the seeded stream
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0f64; current.params.len()];
            let mut batch_loss = 0.0;
            for &s in batch {
                let (loss, g) = current.loss_and_grad(&train_set.inputs[s], train_set.labels[s]);
                batch_loss += loss;
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += v;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let scale = 1.0 / batch.len() as f64;
            for i in 0..grad.len() {
                velocity[i] =
                    cfg.momentum * velocity[i] - cfg.learning_rate * lr_mult[i] * grad[i] * scale;
                current.params[i] += velocity[i];
            }
        }
        let (train_loss, train_accuracy) = evaluate(&current, &train_set);
        let (val_loss, val_accuracy) = evaluate(&current, &val_set);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(EpochStats { train_loss, train_accuracy, val_loss, val_accuracy });
        if val_loss < best_val {
            best_val = val_loss;
            best = current.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, history))
}

/// Per-parameter learning-rate multiplier vector: `mult` on the final fully
/// connected layer, 1 elsewhere.
fn final_layer_multipliers(model: &CnnModel, mult: f64) -> Vec<f64> {
    let mut out = vec![1.0; model.params.len()];
    if let Some(LayerSpec::Fc { n_in, n_out, w_off, b_off, .. }) = model.layers.last() {
        for m in &mut out[*w_off..w_off + n_out * n_in] {
            *m = mult;
        }
        for m in &mut out[*b_off..b_off + n_out] {
            *m = mult;
        }
    }
    out
}

/// Compare analytic gradients against central finite differences on
/// `n_samples` (at least 200) randomly chosen parameters; returns the
/// maximum relative error.
pub fn gradient_check(
    model: &CnnModel,
    patch: &Raster,
    label: usize,
    seed: u64,
    n_samples: usize,
) -> Result<f64> {
    if label >= model.n_classes {
        return Err(Error::Model(format!(
            "label {label} out of range for {} classes",
            model.n_classes
        )));
    }
    let input = model.patch_to_input(patch)?;
    let (_, grad) = model.loss_and_grad(&input, label);
    let mut probe = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_samples.max(200).min(model.param_count());
    // small enough that a perturbation rarely straddles a ReLU kink (where
    // central differences are invalid), large enough that f64 roundoff in the
    // O(1) loss stays ~1e-11 of the difference quotient
    let step = 1e-5;
    let mut max_rel = 0.0f64;
    for _ in 0..n {
        let i = rng.gen_range(0..model.param_count());
        let orig = probe.params[i];
        probe.params[i] = orig + step;
        let (lp, _) = probe.loss_and_grad(&input, label);
        probe.params[i] = orig - step;
        let (lm, _) = probe.loss_and_grad(&input, label);
        probe.params[i] = orig;
        let numeric = (lp - lm) / (2.0 * step);
        let denom = grad[i].abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max((grad[i] - numeric).abs() / denom);
    }
    Ok(max_rel)
}
