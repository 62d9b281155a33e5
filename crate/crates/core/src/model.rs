//! Model composition, initialization, loss and checkpoints.
//!
//! * `Full`: pad → depthwise conv → GRU → linear head on `H_T` → softmax.
//! * `NoRecurrent`: pad → depthwise conv → temporal mean → linear head.
//! * `GruOnly`: GRU over an already-built representation → linear head;
//!   used by the imputation and mask/interval baselines.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conv::{self, ConvCache, ConvParams};
use crate::error::{Error, Result};
use crate::gru::{self, GruParams, HiddenTrace};
use crate::json;
use crate::numerics::{DenseMatrix, Rng};
use crate::pipeline::Preprocessor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoRecurrent,
    GruOnly,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRecurrent => "no_recurrent",
            Variant::GruOnly => "gru_only",
        }
    }
}

/// All learnable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    pub conv: Option<ConvParams>,
    pub gru: Option<GruParams>,
    /// `2 × d`, `d` = hidden size, or input width for `NoRecurrent`.
    pub head_w: DenseMatrix,
    pub head_b: DenseMatrix,
    input_width: usize,
    hidden: usize,
}

/// Checkpoint / gradient-report names, in a fixed order.
pub const TENSOR_NAMES: [&str; 10] = [
    "conv.kernels",
    "conv.biases",
    "gru.w_r",
    "gru.w_u",
    "gru.w_h",
    "gru.b_r",
    "gru.b_u",
    "gru.h_h",
    "head.w_y",
    "head.b_y",
];

fn glorot(rng: &mut Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.uniform(-limit, limit))
}

impl ModelParams {
    /// Uniform(−L, L) weights with `L = √(6 / (fan_in + fan_out))`, zero
    /// biases. A conv kernel has `fan_in = k`, `fan_out = 1`.
    pub fn init(input_width: usize, hidden: usize, kernel_size: usize, seed: u64, variant: Variant) -> Result<Self> {
        if input_width == 0 || hidden == 0 {
            return Err(Error::Invalid("input width and hidden size must be ≥ 1".into()));
        }
        conv::validate_kernel_size(kernel_size)?;
        let mut rng = Rng::derive(seed, 0x1417);
        let n = input_width;
        let g = hidden;
        let conv = matches!(variant, Variant::Full | Variant::NoRecurrent).then(|| ConvParams {
            kernels: glorot(&mut rng, n, kernel_size, kernel_size, 1),
            biases: DenseMatrix::zeros(n, 1),
        });
        let gru = matches!(variant, Variant::Full | Variant::GruOnly).then(|| {
            let mut p = GruParams::zeros(n, g);
            p.w_r = glorot(&mut rng, g, g + n, g + n, g);
            p.w_u = glorot(&mut rng, g, g + n, g + n, g);
            p.w_h = glorot(&mut rng, g, g + n, g + n, g);
            p
        });
        let d = if variant == Variant::NoRecurrent { n } else { g };
        Ok(ModelParams {
            variant,
            conv,
            gru,
            head_w: glorot(&mut rng, 2, d, d, 2),
            head_b: DenseMatrix::zeros(2, 1),
            input_width,
            hidden,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn kernel_size(&self) -> usize {
        self.conv.as_ref().map_or(conv::DEFAULT_KERNEL_SIZE, ConvParams::kernel_size)
    }

    pub fn tensors(&self) -> Vec<(&'static str, &DenseMatrix)> {
        let mut out = Vec::with_capacity(10);
        if let Some(c) = &self.conv {
            out.push((TENSOR_NAMES[0], &c.kernels));
            out.push((TENSOR_NAMES[1], &c.biases));
        }
        if let Some(g) = &self.gru {
            out.push((TENSOR_NAMES[2], &g.w_r));
            out.push((TENSOR_NAMES[3], &g.w_u));
            out.push((TENSOR_NAMES[4], &g.w_h));
            out.push((TENSOR_NAMES[5], &g.b_r));
            out.push((TENSOR_NAMES[6], &g.b_u));
            out.push((TENSOR_NAMES[7], &g.b_h));
        }
        out.push((TENSOR_NAMES[8], &self.head_w));
        out.push((TENSOR_NAMES[9], &self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut DenseMatrix)> {
        let mut out = Vec::with_capacity(10);
        if let Some(c) = &mut self.conv {
            out.push((TENSOR_NAMES[0], &mut c.kernels));
            out.push((TENSOR_NAMES[1], &mut c.biases));
        }
        if let Some(g) = &mut self.gru {
            out.push((TENSOR_NAMES[2], &mut g.w_r));
            out.push((TENSOR_NAMES[3], &mut g.w_u));
            out.push((TENSOR_NAMES[4], &mut g.w_h));
            out.push((TENSOR_NAMES[5], &mut g.b_r));
            out.push((TENSOR_NAMES[6], &mut g.b_u));
            out.push((TENSOR_NAMES[7], &mut g.b_h));
        }
        out.push((TENSOR_NAMES[8], &mut self.head_w));
        out.push((TENSOR_NAMES[9], &mut self.head_b));
        out
    }

    /// Same structure, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += k * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, k: f64) -> Result<()> {
        let theirs = other.tensors();
        let mut mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::Invalid("parameter sets have different structure".into()));
        }
        for ((_, a), (_, b)) in mine.iter_mut().zip(&theirs) {
            a.add_scaled(b, k)?;
        }
        Ok(())
    }

    pub fn sum_squares(&self) -> f64 {
        self.tensors().iter().map(|(_, t)| t.sum_squares()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn scale(&mut self, k: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale(k);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, t)| t.as_slice().iter().copied()).collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.input_width;
        let d = match self.variant {
            Variant::NoRecurrent => n,
            _ => self.hidden,
        };
        let need_conv = matches!(self.variant, Variant::Full | Variant::NoRecurrent);
        let need_gru = matches!(self.variant, Variant::Full | Variant::GruOnly);
        if need_conv != self.conv.is_some() || need_gru != self.gru.is_some() {
            return Err(Error::Invalid(format!("tensor set does not match variant {}", self.variant.as_str())));
        }
        if let Some(c) = &self.conv {
            if c.kernels.rows() != n || c.biases.shape() != (n, 1) {
                return Err(Error::ShapeMismatch {
                    op: "conv params",
                    left: c.kernels.shape(),
                    right: (n, c.kernel_size()),
                });
            }
            conv::validate_kernel_size(c.kernel_size())?;
        }
        if let Some(g) = &self.gru {
            g.validate()?;
            if g.hidden() != self.hidden || g.input() != n {
                return Err(Error::ShapeMismatch {
                    op: "gru params",
                    left: g.w_r.shape(),
                    right: (self.hidden, self.hidden + n),
                });
            }
        }
        if self.head_w.shape() != (2, d) || self.head_b.shape() != (2, 1) {
            return Err(Error::ShapeMismatch {
                op: "head params",
                left: self.head_w.shape(),
                right: (2, d),
            });
        }
        for (name, t) in self.tensors() {
            if let Some(index) = t.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: name.into(),
                    index,
                });
            }
        }
        Ok(())
    }
}

/// Class probabilities `ŷ` and the logits they came from. Index 1 is the
/// positive class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub logits: [f64; 2],
    pub probs: [f64; 2],
}

impl Prediction {
    pub fn from_logits(logits: [f64; 2]) -> Self {
        Prediction {
            logits,
            probs: softmax(logits),
        }
    }

    /// Positive-class probability, used as the ranking score.
    pub fn score(&self) -> f64 {
        self.probs[1]
    }
}

/// Max-shifted softmax over two logits.
pub fn softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Forward state kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct ModelCache {
    conv: Option<ConvCache>,
    /// Input to the GRU / pooling stage.
    z: DenseMatrix,
    trace: Option<HiddenTrace>,
    /// Vector fed to the head: `H_T` or the pooled conv output.
    features: Vec<f64>,
    pub prediction: Prediction,
}

pub fn model_forward(x: &DenseMatrix, p: &ModelParams) -> Result<(Prediction, ModelCache)> {
    if x.rows() != p.input_width {
        return Err(Error::ShapeMismatch {
            op: "model_forward",
            left: x.shape(),
            right: (p.input_width, x.cols()),
        });
    }
    let (conv_cache, z) = match &p.conv {
        Some(c) => {
            let padded = conv::pad_journey_width(x, c.pad())?;
            let (z, cache) = conv::conv_forward(&padded, c)?;
            (Some(cache), z)
        }
        None => {
            if x.cols() == 0 {
                return Err(Error::Invalid("empty journey".into()));
            }
            (None, x.clone())
        }
    };
    let (trace, features) = match &p.gru {
        Some(g) => {
            let (h, trace) = gru::gru_sequence_forward(&z, g)?;
            (Some(trace), h)
        }
        None => {
            let t = z.cols() as f64;
            let pooled = (0..z.rows()).map(|r| z.row(r).iter().sum::<f64>() / t).collect();
            (None, pooled)
        }
    };
    let mut logits = [0.0; 2];
    for (c, l) in logits.iter_mut().enumerate() {
        *l = p.head_b.get(c, 0)
            + p.head_w.row(c).iter().zip(&features).map(|(a, b)| a * b).sum::<f64>();
    }
    let prediction = Prediction::from_logits(logits);
    Ok((
        prediction,
        ModelCache {
            conv: conv_cache,
            z,
            trace,
            features,
            prediction,
        },
    ))
}

pub fn predict(x: &DenseMatrix, p: &ModelParams) -> Result<Prediction> {
    model_forward(x, p).map(|(pred, _)| pred)
}

/// Per-class loss weights `(w₀, w₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub f64, pub f64);

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights(1.0, 1.0);

    /// `w_c = P / (2·P_c)`; a class absent from `labels` gets weight 1.
    pub fn balanced(labels: &[u8]) -> Self {
        let p = labels.len() as f64;
        let pos = labels.iter().filter(|l| **l == 1).count() as f64;
        let neg = p - pos;
        if pos == 0.0 || neg == 0.0 {
            return ClassWeights::UNIT;
        }
        ClassWeights(p / (2.0 * neg), p / (2.0 * pos))
    }

    pub fn for_label(&self, label: u8) -> f64 {
        if label == 1 {
            self.1
        } else {
            self.0
        }
    }
}

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[inline]
fn clamp_prob(q: f64) -> f64 {
    q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// One patient's term: `−w_y · Σ_c [y_c·ln q_c + (1 − y_c)·ln(1 − q_c)]`
/// with `y` one-hot and `q` the clamped probabilities.
pub fn patient_loss(pred: &Prediction, label: u8, weights: ClassWeights) -> f64 {
    let w = weights.for_label(label);
    let mut s = 0.0;
    for c in 0..2 {
        let q = clamp_prob(pred.probs[c]);
        let y = if c == usize::from(label) { 1.0 } else { 0.0 };
        s += y * q.ln() + (1.0 - y) * (1.0 - q).ln();
    }
    -w * s
}

/// Class-weighted average cross-entropy over a batch.
pub fn weighted_cross_entropy(preds: &[Prediction], labels: &[u8], weights: ClassWeights) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Invalid("loss over an empty batch".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "weighted_cross_entropy",
            left: (preds.len(), 1),
            right: (labels.len(), 1),
        });
    }
    let total: f64 = preds.iter().zip(labels).map(|(p, &y)| patient_loss(p, y, weights)).sum();
    Ok(total / preds.len() as f64)
}

/// `∂ patient_loss / ∂ logits`.
///
/// With `q_c = clamp(ŷ_c)`:
/// `∂L/∂ŷ_c = −w·[y_c/q_c − (1 − y_c)/(1 − q_c)]` where the clamp is inactive
/// and 0 where it binds; then through the softmax Jacobian
/// `∂ŷ_c/∂l_k = ŷ_c·(δ_ck − ŷ_k)`.
pub fn logit_gradient(pred: &Prediction, label: u8, weights: ClassWeights) -> [f64; 2] {
    let w = weights.for_label(label);
    let mut d_prob = [0.0; 2];
    for (c, d) in d_prob.iter_mut().enumerate() {
        let p = pred.probs[c];
        if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
            continue;
        }
        let y = if c == usize::from(label) { 1.0 } else { 0.0 };
        *d = -w * (y / p - (1.0 - y) / (1.0 - p));
    }
    let mut d_logit = [0.0; 2];
    for (k, dl) in d_logit.iter_mut().enumerate() {
        for c in 0..2 {
            let delta = if c == k { 1.0 } else { 0.0 };
            *dl += d_prob[c] * pred.probs[c] * (delta - pred.probs[k]);
        }
    }
    d_logit
}

/// Gradients of one patient's loss term.
pub fn model_backward(p: &ModelParams, cache: &ModelCache, label: u8, weights: ClassWeights) -> Result<ModelParams> {
    let mut grads = p.zeros_like();
    accumulate_gradients(p, cache, label, weights, 1.0, &mut grads)?;
    Ok(grads)
}

/// Adds `scale · ∂ patient_loss / ∂θ` into `grads`.
pub fn accumulate_gradients(
    p: &ModelParams,
    cache: &ModelCache,
    label: u8,
    weights: ClassWeights,
    scale: f64,
    grads: &mut ModelParams,
) -> Result<()> {
    if cache.features.len() != p.head_w.cols() || cache.z.rows() != p.input_width {
        return Err(Error::ShapeMismatch {
            op: "model_backward",
            left: (cache.z.rows(), cache.features.len()),
            right: (p.input_width, p.head_w.cols()),
        });
    }
    let dl = logit_gradient(&cache.prediction, label, weights).map(|v| v * scale);
    if dl == [0.0, 0.0] {
        return Ok(());
    }
    let d = cache.features.len();
    let mut d_features = vec![0.0; d];
    for (c, &dlc) in dl.iter().enumerate() {
        let b = grads.head_b.get(c, 0);
        grads.head_b.set(c, 0, b + dlc);
        let gw = grads.head_w.row_mut(c);
        for j in 0..d {
            gw[j] += dlc * cache.features[j];
        }
        for (df, w) in d_features.iter_mut().zip(p.head_w.row(c)) {
            *df += dlc * w;
        }
    }

    let need_dz = p.conv.is_some();
    let mut dz = DenseMatrix::zeros(cache.z.rows(), cache.z.cols());
    match (&p.gru, &cache.trace) {
        (Some(g), Some(trace)) => {
            let gg = grads.gru.as_mut().expect("gradient structure mirrors params");
            gru::gru_backward_into(&d_features, trace, g, gg, need_dz.then_some(&mut dz))?;
        }
        (None, None) => {
            let t = cache.z.cols() as f64;
            for r in 0..dz.rows() {
                let v = d_features[r] / t;
                dz.row_mut(r).iter_mut().for_each(|x| *x = v);
            }
        }
        _ => return Err(Error::Invalid("cache does not match model variant".into())),
    }
    if let (Some(c), Some(cc)) = (&p.conv, &cache.conv) {
        let gc = grads.conv.as_mut().expect("gradient structure mirrors params");
        conv::conv_backward_into(&dz, cc, c, &mut gc.kernels, &mut gc.biases, None)?;
    }
    Ok(())
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorJson {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointJson {
    version: u32,
    variant: Variant,
    n_features: usize,
    hidden: usize,
    kernel_size: usize,
    input_width: usize,
    normalizer: crate::data::Normalizer,
    preprocessing: Preprocessor,
    tensors: BTreeMap<String, TensorJson>,
}

/// Parameters plus the preprocessing needed to turn raw journeys into
/// model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub preprocessor: Preprocessor,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let p = &self.params;
        let tensors = p
            .tensors()
            .into_iter()
            .map(|(name, t)| {
                (
                    name.to_string(),
                    TensorJson {
                        rows: t.rows(),
                        cols: t.cols(),
                        data: t.as_slice().to_vec(),
                    },
                )
            })
            .collect();
        let doc = CheckpointJson {
            version: CHECKPOINT_VERSION,
            variant: p.variant,
            n_features: self.preprocessor.normalizer.n_features(),
            hidden: p.hidden,
            kernel_size: p.kernel_size(),
            input_width: p.input_width,
            normalizer: self.preprocessor.normalizer.clone(),
            preprocessing: self.preprocessor.clone(),
            tensors,
        };
        json::to_string(&doc)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let version = serde_json::from_str::<serde_json::Value>(text)
            .map_err(|e| Error::Checkpoint(format!("not valid JSON: {e}")))?
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Checkpoint("missing version".into()))?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let mut doc: CheckpointJson =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut take = |name: &str| -> Result<DenseMatrix> {
            let t = doc
                .tensors
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            DenseMatrix::from_vec(t.rows, t.cols, t.data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))
        };
        let conv = match doc.variant {
            Variant::Full | Variant::NoRecurrent => Some(ConvParams {
                kernels: take("conv.kernels")?,
                biases: take("conv.biases")?,
            }),
            Variant::GruOnly => None,
        };
        let gru = match doc.variant {
            Variant::Full | Variant::GruOnly => Some(GruParams {
                w_r: take("gru.w_r")?,
                w_u: take("gru.w_u")?,
                w_h: take("gru.w_h")?,
                b_r: take("gru.b_r")?,
                b_u: take("gru.b_u")?,
                b_h: take("gru.h_h")?,
            }),
            Variant::NoRecurrent => None,
        };
        let params = ModelParams {
            variant: doc.variant,
            conv,
            gru,
            head_w: take("head.w_y")?,
            head_b: take("head.b_y")?,
            input_width: doc.input_width,
            hidden: doc.hidden,
        };
        if let Some(extra) = doc.tensors.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
        }
        params.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        if params.kernel_size() != doc.kernel_size {
            return Err(Error::Checkpoint("kernel_size disagrees with conv.kernels".into()));
        }
        let mut preprocessor = doc.preprocessing;
        preprocessor.normalizer = doc.normalizer;
        if preprocessor.normalizer.n_features() != doc.n_features {
            return Err(Error::Checkpoint("normalizer width disagrees with n_features".into()));
        }
        Ok(Checkpoint { params, preprocessor })
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    json::write_atomic(path, ck.to_json().as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(rng: &mut Rng, n: usize, t: usize) -> DenseMatrix {
        DenseMatrix::from_fn(n, t, |_, _| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn softmax_values() {
        assert_eq!(softmax([0.0, 0.0]), [0.5, 0.5]);
        let p = softmax([3f64.ln(), 0.0]);
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
        let a = softmax([1.3, -0.4]);
        let b = softmax([1.3 + 700.0, -0.4 + 700.0]);
        assert!((a[0] - b[0]).abs() < 1e-12);
        let s = softmax([800.0, -800.0]);
        assert!(s[0].is_finite() && s[1] >= 0.0);
    }

    #[test]
    fn init_rules() {
        let a = ModelParams::init(4, 6, 3, 9, Variant::Full).unwrap();
        let b = ModelParams::init(4, 6, 3, 9, Variant::Full).unwrap();
        assert_eq!(a, b);
        let bound = 1.5f64.sqrt();
        assert!(a.conv.as_ref().unwrap().kernels.as_slice().iter().all(|v| v.abs() < bound));
        for (name, t) in a.tensors() {
            if name.contains(".b") || name.ends_with("h_h") {
                assert_eq!(t.max_abs(), 0.0, "{name}");
            }
        }
        assert_ne!(a, ModelParams::init(4, 6, 3, 10, Variant::Full).unwrap());
        assert!(ModelParams::init(0, 6, 3, 1, Variant::Full).is_err());
        assert!(ModelParams::init(2, 6, 4, 1, Variant::Full).is_err());
    }

    #[test]
    fn zero_model_predicts_half() {
        let p = ModelParams::init(3, 4, 3, 1, Variant::Full).unwrap().zeros_like();
        let mut rng = Rng::new(1);
        let pred = predict(&random_input(&mut rng, 3, 7), &p).unwrap();
        assert_eq!(pred.probs, [0.5, 0.5]);
    }

    #[test]
    fn hand_chained_small_model() {
        // N = 2, T = 3, g = 2
        let mut rng = Rng::new(77);
        let mut p = ModelParams::init(2, 2, 3, 5, Variant::Full).unwrap();
        for (_, t) in p.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0));
        }
        let x = random_input(&mut rng, 2, 3);
        let pred = predict(&x, &p).unwrap();

        let c = p.conv.as_ref().unwrap();
        let at = |f: usize, t: isize| if (0..3).contains(&t) { x.get(f, t as usize) } else { 0.0 };
        let z: Vec<[f64; 2]> = (0..3)
            .map(|t| {
                let mut col = [0.0; 2];
                for (f, v) in col.iter_mut().enumerate() {
                    let s = (0..3).map(|k| at(f, t as isize + k as isize - 1) * c.kernels.get(f, k)).sum::<f64>()
                        + c.biases.get(f, 0);
                    *v = s.max(0.0);
                }
                col
            })
            .collect();
        let g = p.gru.as_ref().unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let lin = |w: &DenseMatrix, b: &DenseMatrix, i: usize, a: &[f64; 2], zz: &[f64; 2]| {
            b.get(i, 0) + w.get(i, 0) * a[0] + w.get(i, 1) * a[1] + w.get(i, 2) * zz[0] + w.get(i, 3) * zz[1]
        };
        let mut h = [0.0; 2];
        for zt in &z {
            let r = [sig(lin(&g.w_r, &g.b_r, 0, &h, zt)), sig(lin(&g.w_r, &g.b_r, 1, &h, zt))];
            let u = [sig(lin(&g.w_u, &g.b_u, 0, &h, zt)), sig(lin(&g.w_u, &g.b_u, 1, &h, zt))];
            let rh = [r[0] * h[0], r[1] * h[1]];
            let ht = [lin(&g.w_h, &g.b_h, 0, &rh, zt).tanh(), lin(&g.w_h, &g.b_h, 1, &rh, zt).tanh()];
            h = [u[0] * h[0] + (1.0 - u[0]) * ht[0], u[1] * h[1] + (1.0 - u[1]) * ht[1]];
        }
        let l: Vec<f64> = (0..2)
            .map(|cl| p.head_b.get(cl, 0) + p.head_w.get(cl, 0) * h[0] + p.head_w.get(cl, 1) * h[1])
            .collect();
        let e0 = l[0].exp();
        let e1 = l[1].exp();
        assert!((pred.probs[1] - e1 / (e0 + e1)).abs() < 1e-10);
    }

    #[test]
    fn loss_values() {
        let half = Prediction::from_logits([0.0, 0.0]);
        let l = patient_loss(&half, 1, ClassWeights::UNIT);
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        let perfect = Prediction {
            logits: [0.0, 0.0],
            probs: [0.0, 1.0],
        };
        assert!(patient_loss(&perfect, 1, ClassWeights::UNIT) <= 5e-12);
        let doubled = patient_loss(&half, 1, ClassWeights(1.0, 2.0));
        assert_eq!(doubled, 2.0 * l);
        assert!(weighted_cross_entropy(&[], &[], ClassWeights::UNIT).is_err());
    }

    #[test]
    fn balanced_weights() {
        let w = ClassWeights::balanced(&[1, 0, 0, 0]);
        assert_eq!(w, ClassWeights(4.0 / 6.0, 2.0));
        assert_eq!(ClassWeights::balanced(&[0, 0]), ClassWeights(1.0, 1.0));
    }

    #[test]
    fn zero_weights_zero_gradients() {
        let p = ModelParams::init(3, 4, 3, 2, Variant::Full).unwrap();
        let mut rng = Rng::new(3);
        let (_, cache) = model_forward(&random_input(&mut rng, 3, 5), &p).unwrap();
        let g = model_backward(&p, &cache, 1, ClassWeights(0.0, 0.0)).unwrap();
        assert_eq!(g.sum_squares(), 0.0);
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        use crate::data::{NormMode, Normalizer};
        let p = ModelParams::init(3, 5, 3, 4, Variant::Full).unwrap();
        let ck = Checkpoint {
            params: p,
            preprocessor: Preprocessor::zero_fill(Normalizer {
                mode: NormMode::PaperScale,
                mean: vec![1.0, 2.0, 1.0 / 3.0],
                std: vec![0.5, 0.25, 0.1],
                max_abs: vec![3.0, 4.0, 5.0],
                warnings: vec![],
            }),
        };
        let text = ck.to_json();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.params.flatten().iter().zip(ck.params.flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["n_features"], 3);
        assert_eq!(v["hidden"], 5);
        assert_eq!(v["variant"], "full");
        assert!(v["normalizer"]["max_abs"].is_array());

        let truncated = &text[..text.len() / 2];
        assert!(matches!(Checkpoint::from_json(truncated), Err(Error::Checkpoint(_))));
        let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
        let err = Checkpoint::from_json(&bumped).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }
}
