//! Optimizer, batching and the epoch loop with validation early stopping.

use serde::{Deserialize, Serialize};

use crate::data::NormMode;
use crate::error::{Error, Result};
use crate::metrics::{auprc, auroc, ScoredSet};
use crate::model::{self, ClassWeights, ModelParams, Prediction};
use crate::numerics::Rng;
use crate::pipeline::PreparedSet;
use crate::protocol::Method;

/// Gradient-norm bound used when `clip_grad` is on.
pub const CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopMetric {
    #[default]
    Auprc,
    Auroc,
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeightMode {
    /// `w_c = P / (2·P_c)` on the training split.
    #[default]
    Balanced,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub patience: usize,
    pub early_stop: EarlyStopMetric,
    pub method: Method,
    pub normalization: NormMode,
    pub class_weight: ClassWeightMode,
    pub hidden: usize,
    pub kernel_size: usize,
    pub clip_grad: bool,
    pub knn_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            patience: 10,
            early_stop: EarlyStopMetric::Auprc,
            method: Method::Full,
            normalization: NormMode::PaperScale,
            class_weight: ClassWeightMode::Balanced,
            hidden: 64,
            kernel_size: 3,
            clip_grad: false,
            knn_k: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("invalid config: {m}")));
        if self.epochs == 0 {
            return bad("epochs must be ≥ 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1");
        }
        if self.patience == 0 {
            return bad("patience must be ≥ 1");
        }
        if self.hidden == 0 {
            return bad("hidden must be ≥ 1");
        }
        if self.knn_k == 0 {
            return bad("knn_k must be ≥ 1");
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("optimizer hyperparameters out of range");
        }
        crate::conv::validate_kernel_size(self.kernel_size)
    }
}

/// Adam moments per tensor plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimState {
    pub fn new(params: &ModelParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        OptimState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn from_config(params: &ModelParams, cfg: &TrainConfig) -> Self {
        Self::new(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    }
}

/// One bias-corrected Adam update. Rejects non-finite gradients before
/// touching any parameter.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, s: &mut OptimState) -> Result<()> {
    let g_tensors = grads.tensors();
    for (name, g) in &g_tensors {
        if let Some(index) = g.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("gradient of {name}"),
                index,
            });
        }
    }
    s.step += 1;
    let t = s.step as i32;
    let c1 = 1.0 - s.beta1.powi(t);
    let c2 = 1.0 - s.beta2.powi(t);
    let (b1, b2, lr, eps) = (s.beta1, s.beta2, s.lr, s.eps);
    let mut p_tensors = params.tensors_mut();
    let mut m_tensors = s.m.tensors_mut();
    let mut v_tensors = s.v.tensors_mut();
    if p_tensors.len() != g_tensors.len() {
        return Err(Error::Invalid("gradient structure does not match parameters".into()));
    }
    for (((_, p), (_, m)), ((name, v), (_, g))) in p_tensors
        .iter_mut()
        .zip(m_tensors.iter_mut())
        .zip(v_tensors.iter_mut().zip(&g_tensors))
    {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: name,
                left: p.shape(),
                right: g.shape(),
            });
        }
        let ps = p.as_mut_slice();
        let ms = m.as_mut_slice();
        let vs = v.as_mut_slice();
        for (i, &gi) in g.as_slice().iter().enumerate() {
            ms[i] = b1 * ms[i] + (1.0 - b1) * gi;
            vs[i] = b2 * vs[i] + (1.0 - b2) * gi * gi;
            let m_hat = ms[i] / c1;
            let v_hat = vs[i] / c2;
            ps[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Shuffled index batches for one epoch, keyed by `(seed, epoch)`.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch_size must be positive");
    let perm = Rng::derive(seed ^ 0x0BA7_C4E5, epoch as u64).permutation(n);
    perm.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean patient loss over the epoch, accumulated while training.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auroc: Option<f64>,
    pub val_auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Training loss of the initial parameters, before any update.
    pub initial_train_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        let mut out = String::from("epoch,train_loss,val_loss,val_auroc,val_auprc\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{},{}\n",
                r.epoch,
                r.train_loss,
                r.val_loss,
                opt(r.val_auroc),
                opt(r.val_auprc)
            ));
        }
        out
    }
}

/// Predictions for every input, in order.
pub fn predict_all(params: &ModelParams, set: &PreparedSet) -> Result<Vec<Prediction>> {
    set.inputs.iter().map(|x| model::predict(x, params)).collect()
}

/// Average weighted loss of `params` over a set.
pub fn dataset_loss(params: &ModelParams, set: &PreparedSet, weights: ClassWeights) -> Result<f64> {
    let preds = predict_all(params, set)?;
    model::weighted_cross_entropy(&preds, &set.labels, weights)
}

struct ValStats {
    loss: f64,
    auroc: Option<f64>,
    auprc: Option<f64>,
}

fn validate_epoch(params: &ModelParams, val: &PreparedSet, weights: ClassWeights) -> Result<ValStats> {
    let preds = predict_all(params, val)?;
    let loss = model::weighted_cross_entropy(&preds, &val.labels, weights)?;
    let scored = ScoredSet::new(preds.iter().map(Prediction::score).collect(), val.labels.clone())?;
    Ok(ValStats {
        loss,
        auroc: auroc(&scored).ok(),
        auprc: auprc(&scored).ok(),
    })
}

/// Larger is better for every key.
fn stop_key(metric: EarlyStopMetric, v: &ValStats) -> Result<f64> {
    let missing = |name: &str| Error::SingleClass(format!("validation {name} for early stopping"));
    match metric {
        EarlyStopMetric::Auprc => v.auprc.ok_or_else(|| missing("AUPRC")),
        EarlyStopMetric::Auroc => v.auroc.ok_or_else(|| missing("AUROC")),
        EarlyStopMetric::Loss => Ok(-v.loss),
    }
}

/// Trains from `init` on `train`, selecting the epoch with the best
/// validation metric and stopping after `patience` epochs without strict
/// improvement. Only `train` and `val` are visible here.
pub fn train(
    init: ModelParams,
    train: &PreparedSet,
    val: &PreparedSet,
    cfg: &TrainConfig,
    weights: ClassWeights,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Invalid("training and validation sets must be non-empty".into()));
    }
    let mut params = init;
    let mut state = OptimState::from_config(&params, cfg);
    let mut grads = params.zeros_like();
    let mut history = TrainHistory {
        initial_train_loss: dataset_loss(&params, train, weights)?,
        ..Default::default()
    };
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;
    let mut last_finite = None;

    for epoch in 1..=cfg.epochs {
        let diverged = || Error::Diverged { epoch, last_finite };
        let mut loss_sum = 0.0;
        for batch in make_batches(train.len(), cfg.batch_size, cfg.seed, epoch) {
            grads.scale(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in &batch {
                let (pred, cache) = model::model_forward(&train.inputs[i], &params)?;
                loss_sum += model::patient_loss(&pred, train.labels[i], weights);
                model::accumulate_gradients(&params, &cache, train.labels[i], weights, scale, &mut grads)?;
            }
            if cfg.clip_grad {
                let norm = grads.sum_squares().sqrt();
                if norm > CLIP_NORM {
                    grads.scale(CLIP_NORM / norm);
                }
            }
            match adam_step(&mut params, &grads, &mut state) {
                Err(Error::NonFinite { .. }) => return Err(diverged()),
                other => other?,
            }
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() || !params.is_finite() {
            return Err(diverged());
        }
        let v = match validate_epoch(&params, val, weights) {
            Err(Error::NonFinite { .. }) => return Err(diverged()),
            other => other?,
        };
        if !v.loss.is_finite() {
            return Err(diverged());
        }
        last_finite = Some(epoch);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: v.loss,
            val_auroc: v.auroc,
            val_auprc: v.auprc,
        });
        let key = stop_key(cfg.early_stop, &v)?;
        if best.as_ref().map_or(true, |(b, _)| key > *b) {
            best = Some((key, params.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, history))
}
