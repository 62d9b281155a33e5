use serde::{Deserialize, Serialize};

use super::{Dataset, PatientJourney};
use crate::numerics::DenseMatrix;

/// Floor applied to std and max-abs so degenerate features never divide by 0.
pub const STAT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Observed cells divided by the feature's observed max-abs; missing
    /// cells stay exactly 0, which for positive-valued features is outside
    /// the observed range.
    #[default]
    PaperScale,
    /// Observed cells z-scored. The 0 fill then coincides with the feature
    /// mean.
    Zscore,
}

impl std::str::FromStr for NormMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper_scale" => Ok(NormMode::PaperScale),
            "zscore" => Ok(NormMode::Zscore),
            other => Err(format!("unknown normalization mode `{other}`")),
        }
    }
}

/// Per-feature statistics from observed cells of a training split.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormMode,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub max_abs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Normalizer {
    /// Fits on mask=1 cells only. Population std.
    pub fn fit(train: &Dataset, mode: NormMode) -> Self {
        let n = train.n_features();
        let mut count = vec![0usize; n];
        let mut sum = vec![0.0; n];
        let mut max_abs = vec![0.0f64; n];
        for j in train.journeys() {
            for f in 0..n {
                for t in 0..j.len() {
                    if let Some(v) = j.value(f, t) {
                        count[f] += 1;
                        sum[f] += v;
                        max_abs[f] = max_abs[f].max(v.abs());
                    }
                }
            }
        }
        let mean: Vec<f64> = (0..n)
            .map(|f| if count[f] > 0 { sum[f] / count[f] as f64 } else { 0.0 })
            .collect();
        let mut sq = vec![0.0; n];
        for j in train.journeys() {
            for f in 0..n {
                for t in 0..j.len() {
                    if let Some(v) = j.value(f, t) {
                        sq[f] += (v - mean[f]).powi(2);
                    }
                }
            }
        }
        let mut warnings = Vec::new();
        let std = (0..n)
            .map(|f| {
                if count[f] == 0 {
                    warnings.push(format!(
                        "feature {} ({}) has no observed values in training data",
                        f,
                        train.feature_names()[f]
                    ));
                    return STAT_FLOOR;
                }
                (sq[f] / count[f] as f64).sqrt().max(STAT_FLOOR)
            })
            .collect();
        let max_abs = max_abs.into_iter().map(|m| m.max(STAT_FLOOR)).collect();
        Normalizer {
            mode,
            mean,
            std,
            max_abs,
            warnings,
        }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Normalizes one observed value of `feature`.
    #[inline]
    pub fn scale(&self, feature: usize, v: f64) -> f64 {
        match self.mode {
            NormMode::PaperScale => v / self.max_abs[feature],
            NormMode::Zscore => (v - self.mean[feature]) / self.std[feature],
        }
    }

    /// Model input for a journey: normalized observed cells, exactly 0 in
    /// missing cells.
    pub fn prepare_matrix(&self, j: &PatientJourney) -> DenseMatrix {
        DenseMatrix::from_fn(j.n_features(), j.len(), |f, t| match j.value(f, t) {
            Some(v) => self.scale(f, v),
            None => 0.0,
        })
    }
}
