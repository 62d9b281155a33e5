//! The experiment protocol: split 70:15:15, fit preprocessing on the
//! training split, train with validation early stopping, score the test
//! split; repeated over seeds and summarized as `mean(std)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{split_dataset, Dataset, DEFAULT_RATIOS};
use crate::error::{Error, Result};
use crate::metrics::{auprc, auroc, ScoredSet};
use crate::model::{Checkpoint, ClassWeights, ModelParams, Prediction, Variant};
use crate::pipeline::{PreparedSet, Preprocessor, Representation};
use crate::train::{self, ClassWeightMode, TrainConfig, TrainHistory};

/// What gets trained: the convolutional model (with or without its
/// recurrent part) or a GRU over one of the baseline representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Full,
    NoRecurrent,
    Mean,
    Knn,
    Simple,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Full, Method::NoRecurrent, Method::Mean, Method::Knn, Method::Simple];

    pub fn variant(self) -> Variant {
        match self {
            Method::Full => Variant::Full,
            Method::NoRecurrent => Variant::NoRecurrent,
            _ => Variant::GruOnly,
        }
    }

    pub fn representation(self) -> Representation {
        match self {
            Method::Full | Method::NoRecurrent => Representation::ZeroFill,
            Method::Mean => Representation::MeanImpute,
            Method::Knn => Representation::KnnImpute,
            Method::Simple => Representation::Simple,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::NoRecurrent => "no_recurrent",
            Method::Mean => "mean",
            Method::Knn => "knn",
            Method::Simple => "simple",
        }
    }

    /// Row label used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::Full => "Ours",
            Method::NoRecurrent => "Ours_r-",
            Method::Mean => "Mean",
            Method::Knn => "KNN",
            Method::Simple => "Simple",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected full, no_recurrent, mean, knn or simple)"))
    }
}

/// A fitted model with everything needed to score new journeys.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
    pub class_weights: ClassWeights,
}

pub fn class_weights(mode: ClassWeightMode, labels: &[u8]) -> ClassWeights {
    match mode {
        ClassWeightMode::Balanced => ClassWeights::balanced(labels),
        ClassWeightMode::None => ClassWeights::UNIT,
    }
}

/// Fits preprocessing and class weights on `train_ds`, then trains.
pub fn fit_model(train_ds: &Dataset, val_ds: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let method = cfg.method;
    let pre = Preprocessor::fit(train_ds, method.representation(), cfg.normalization, cfg.knn_k)?;
    let train_set = pre.prepare(train_ds)?;
    let val_set = pre.prepare(val_ds)?;
    let weights = class_weights(cfg.class_weight, &train_set.labels);
    let init = ModelParams::init(pre.input_width(), cfg.hidden, cfg.kernel_size, cfg.seed, method.variant())?;
    let (params, history) = train::train(init, &train_set, &val_set, cfg, weights)?;
    Ok(TrainedModel {
        checkpoint: Checkpoint {
            params,
            preprocessor: pre,
        },
        history,
        class_weights: weights,
    })
}

/// Test-set scores and the two ranking metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub auroc: f64,
    pub auprc: f64,
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    /// Positive-class probability per journey, in dataset order.
    pub scores: Vec<f64>,
}

impl Evaluation {
    pub fn scores_csv(&self) -> String {
        let mut out = String::from("id,label,score\n");
        for ((id, label), score) in self.ids.iter().zip(&self.labels).zip(&self.scores) {
            out.push_str(&format!("{id},{label},{score:.17e}\n"));
        }
        out
    }

    pub fn metrics_json(&self) -> serde_json::Value {
        serde_json::json!({ "auroc": self.auroc, "auprc": self.auprc, "n": self.scores.len() })
    }
}

pub fn evaluate_prepared(params: &ModelParams, set: &PreparedSet) -> Result<Evaluation> {
    let preds = train::predict_all(params, set)?;
    let scores: Vec<f64> = preds.iter().map(Prediction::score).collect();
    let scored = ScoredSet::new(scores.clone(), set.labels.clone())?;
    Ok(Evaluation {
        auroc: auroc(&scored)?,
        auprc: auprc(&scored)?,
        ids: set.ids.clone(),
        labels: set.labels.clone(),
        scores,
    })
}

/// Scores `ds` with a zero-fill model and the normalizer it was trained with.
pub fn evaluate_model(p: &ModelParams, ds: &Dataset, norm: &crate::data::Normalizer) -> Result<Evaluation> {
    let pre = Preprocessor::zero_fill(norm.clone());
    evaluate_prepared(p, &pre.prepare(ds)?)
}

pub fn evaluate_checkpoint(ck: &Checkpoint, ds: &Dataset) -> Result<Evaluation> {
    if ck.preprocessor.n_features() != ds.n_features() {
        return Err(Error::Invalid(format!(
            "checkpoint expects {} features, dataset has {}",
            ck.preprocessor.n_features(),
            ds.n_features()
        )));
    }
    evaluate_prepared(&ck.params, &ck.preprocessor.prepare(ds)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub auroc: f64,
    pub auprc: f64,
}

/// One full protocol run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub model: TrainedModel,
    pub test: Evaluation,
}

impl RunOutcome {
    pub fn metrics(&self) -> RunMetrics {
        RunMetrics {
            seed: self.seed,
            auroc: self.test.auroc,
            auprc: self.test.auprc,
        }
    }
}

/// Splits with `seed`, trains with `cfg.seed = seed`, evaluates on test.
pub fn run_once(ds: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<RunOutcome> {
    let (tr, va, te) = split_dataset(ds, DEFAULT_RATIOS, seed)?;
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let model = fit_model(&tr, &va, &cfg)?;
    let test = evaluate_checkpoint(&model.checkpoint, &te)?;
    Ok(RunOutcome { seed, model, test })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }

    /// `mean(std)` with the given decimals.
    pub fn format(&self, mean_digits: usize, std_digits: usize) -> String {
        format!("{:.*}({:.*})", mean_digits, self.mean, std_digits, self.std)
    }
}

impl fmt::Display for MeanStd {
    /// Result-table style, e.g. `0.8045(0.005)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format(4, 3))
    }
}

/// Per-run test metrics of one method and their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub runs: Vec<RunMetrics>,
    pub auroc: MeanStd,
    pub auprc: MeanStd,
}

impl EvalReport {
    pub fn from_runs(method: impl Into<String>, runs: Vec<RunMetrics>) -> Self {
        let auroc = MeanStd::of(&runs.iter().map(|r| r.auroc).collect::<Vec<_>>());
        let auprc = MeanStd::of(&runs.iter().map(|r| r.auprc).collect::<Vec<_>>());
        EvalReport {
            method: method.into(),
            runs,
            auroc,
            auprc,
        }
    }
}

/// Markdown table in the `Method | AUROC | AUPRC` layout.
pub fn markdown_table(reports: &[EvalReport], mean_digits: usize, std_digits: usize) -> String {
    let mut out = String::from("| Method | AUROC | AUPRC |\n|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {} | {} |\n",
            r.method,
            r.auroc.format(mean_digits, std_digits),
            r.auprc.format(mean_digits, std_digits)
        ));
    }
    out
}

pub fn csv_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,runs,auroc_mean,auroc_std,auprc_mean,auprc_std\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            r.method,
            r.runs.len(),
            r.auroc.mean,
            r.auroc.std,
            r.auprc.mean,
            r.auprc.std
        ));
    }
    out
}

/// Runs the protocol once per seed.
pub fn run_seeds(ds: &Dataset, cfg: &TrainConfig, seeds: &[u64]) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::Invalid("need at least one run".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for (index, &seed) in seeds.iter().enumerate() {
        let out = run_once(ds, cfg, seed).map_err(|e| Error::Run {
            index,
            source: Box::new(e),
        })?;
        runs.push(out.metrics());
    }
    Ok(EvalReport::from_runs(cfg.method.display_name(), runs))
}

/// Seeds `base_seed .. base_seed + n_runs`.
pub fn run_repeated(ds: &Dataset, cfg: &TrainConfig, n_runs: usize, base_seed: u64) -> Result<EvalReport> {
    let seeds: Vec<u64> = (0..n_runs as u64).map(|i| base_seed + i).collect();
    run_seeds(ds, cfg, &seeds)
}

/// A baseline through the same protocol as the main model.
pub fn baseline_predict(method: Method, ds: &Dataset, cfg: &TrainConfig, n_runs: usize, base_seed: u64) -> Result<EvalReport> {
    let cfg = TrainConfig { method, ..cfg.clone() };
    run_repeated(ds, &cfg, n_runs, base_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_format() {
        let m = MeanStd::of(&[0.7, 0.8]);
        assert!((m.mean - 0.75).abs() < 1e-12);
        assert!((m.std - 0.05).abs() < 1e-12);
        assert_eq!(m.format(2, 2), "0.75(0.05)");
        assert_eq!(m.format(3, 3), "0.750(0.050)");
        let m = MeanStd { mean: 0.80451, std: 0.0052 };
        assert_eq!(m.to_string(), "0.8045(0.005)");
        assert_eq!(MeanStd::of(&[0.6; 4]).std, 0.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
        assert!("ours".parse::<Method>().is_err());
    }

    #[test]
    fn table_layout() {
        let r = EvalReport::from_runs(
            "Ours",
            vec![
                RunMetrics { seed: 0, auroc: 0.7, auprc: 0.3 },
                RunMetrics { seed: 1, auroc: 0.8, auprc: 0.4 },
            ],
        );
        let md = markdown_table(&[r.clone()], 4, 3);
        assert!(md.contains("| Ours | 0.7500(0.050) | 0.3500(0.050) |"), "{md}");
        assert!(csv_table(&[r]).lines().nth(1).unwrap().starts_with("Ours,2,"));
    }
}
