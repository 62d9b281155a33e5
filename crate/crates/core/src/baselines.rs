//! Comparison inputs for a plain GRU predictor: mean imputation, KNN
//! imputation over journey summaries, and the mask + time-interval
//! concatenation.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Mask, Normalizer, PatientJourney};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// A dataset with every cell filled, plus which cells were filled.
#[derive(Debug, Clone)]
pub struct ImputedDataset {
    pub dataset: Dataset,
    /// `true` where a value was imputed (the original mask was 0).
    pub imputed: Vec<Mask>,
}

impl ImputedDataset {
    /// Writes the filled dataset with an `imputed_mask` field per line.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::data::save_with_imputed(&self.dataset, path, Some(&self.imputed))
    }
}

fn fill_journey(j: &PatientJourney, mut fill: impl FnMut(usize) -> f64) -> Result<(PatientJourney, Mask)> {
    let (n, t_len) = (j.n_features(), j.len());
    let mut values = j.values().clone();
    let mut imputed = Mask::new(n, t_len, false);
    for f in 0..n {
        let mut value = None;
        for t in 0..t_len {
            if !j.mask().get(f, t) {
                let v = *value.get_or_insert_with(|| fill(f));
                values.set(f, t, v);
                imputed.set(f, t, true);
            }
        }
    }
    let filled = PatientJourney::new(
        j.id.clone(),
        j.label,
        values,
        Mask::new(n, t_len, true),
        j.times().map(<[f64]>::to_vec),
    )?;
    Ok((filled, imputed))
}

fn impute_all(ds: &Dataset, mut f: impl FnMut(&PatientJourney) -> Result<(PatientJourney, Mask)>) -> Result<ImputedDataset> {
    let mut journeys = Vec::with_capacity(ds.len());
    let mut imputed = Vec::with_capacity(ds.len());
    for j in ds.journeys() {
        let (filled, mask) = f(j)?;
        journeys.push(filled);
        imputed.push(mask);
    }
    Ok(ImputedDataset {
        dataset: ds.with_journeys(journeys)?,
        imputed,
    })
}

/// Fills each missing cell with its feature's training mean (raw scale).
pub fn mean_impute(train_stats: &Normalizer, ds: &Dataset) -> Result<ImputedDataset> {
    if train_stats.n_features() != ds.n_features() {
        return Err(Error::FeatureCount {
            id: "<normalizer>".into(),
            expected: ds.n_features(),
            found: train_stats.n_features(),
        });
    }
    impute_all(ds, |j| fill_journey(j, |f| train_stats.mean[f]))
}

/// Reference set for KNN imputation: one fixed-length summary per training
/// journey (its per-feature observed mean, falling back to the training
/// mean for features it never observed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnImputer {
    pub k: usize,
    pub feature_means: Vec<f64>,
    pub summaries: Vec<Vec<f64>>,
}

impl KnnImputer {
    pub fn fit(train: &Dataset, k: usize) -> Result<Self> {
        if k == 0 || k > train.len() {
            return Err(Error::Invalid(format!("K must be in 1..={}, got {k}", train.len())));
        }
        let feature_means = Normalizer::fit(train, Default::default()).mean;
        let summaries = train
            .journeys()
            .iter()
            .map(|j| summarize(j, &feature_means))
            .collect();
        Ok(KnnImputer {
            k,
            feature_means,
            summaries,
        })
    }

    /// Indices of the `k` nearest training summaries; distance ties go to
    /// the earlier training journey.
    pub fn neighbours(&self, summary: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .summaries
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let d2: f64 = s.iter().zip(summary).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dist.into_iter().take(self.k).map(|(_, i)| i).collect()
    }

    pub fn impute_journey(&self, j: &PatientJourney) -> Result<(PatientJourney, Mask)> {
        if j.n_features() != self.feature_means.len() {
            return Err(Error::FeatureCount {
                id: j.id.clone(),
                expected: self.feature_means.len(),
                found: j.n_features(),
            });
        }
        if j.mask().all_observed() {
            return Ok((j.clone(), Mask::new(j.n_features(), j.len(), false)));
        }
        let nn = self.neighbours(&summarize(j, &self.feature_means));
        let k = nn.len() as f64;
        fill_journey(j, |f| nn.iter().map(|&i| self.summaries[i][f]).sum::<f64>() / k)
    }

    pub fn impute(&self, ds: &Dataset) -> Result<ImputedDataset> {
        impute_all(ds, |j| self.impute_journey(j))
    }
}

fn summarize(j: &PatientJourney, fallback: &[f64]) -> Vec<f64> {
    j.observed_means()
        .into_iter()
        .zip(fallback)
        .map(|(m, fb)| m.unwrap_or(*fb))
        .collect()
}

/// KNN imputation of `ds` against the journeys of `train`.
pub fn knn_impute(train: &Dataset, ds: &Dataset, k: usize) -> Result<ImputedDataset> {
    KnnImputer::fit(train, k)?.impute(ds)
}

/// `3N × T` stacked representation: zero-filled values, mask, and
/// per-feature time since the last observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleFeatures {
    pub values: DenseMatrix,
    pub mask: DenseMatrix,
    pub delta: DenseMatrix,
}

impl SimpleFeatures {
    pub fn stacked(&self) -> DenseMatrix {
        let n = self.values.rows();
        let t = self.values.cols();
        DenseMatrix::from_fn(3 * n, t, |r, c| match r / n {
            0 => self.values.get(r, c),
            1 => self.mask.get(r - n, c),
            _ => self.delta.get(r - 2 * n, c),
        })
    }
}

/// Interval matrix. `δ[n, 0] = 0`. For `t ≥ 1`, an observed cell measures
/// from the previous record (`s_t − s_{t−1}`); a missing cell measures from
/// the feature's last observation before `t`, or from `s_0` if there is
/// none. Observations therefore reset the interval.
pub fn time_intervals(j: &PatientJourney) -> DenseMatrix {
    let s = j.time_axis();
    let mut delta = DenseMatrix::zeros(j.n_features(), j.len());
    for f in 0..j.n_features() {
        let mut last_obs: Option<usize> = None;
        for t in 0..j.len() {
            if t > 0 {
                let from = if j.mask().get(f, t) { t - 1 } else { last_obs.unwrap_or(0) };
                delta.set(f, t, s[t] - s[from]);
            }
            if j.mask().get(f, t) {
                last_obs = Some(t);
            }
        }
    }
    delta
}

pub fn simple_features(j: &PatientJourney) -> SimpleFeatures {
    SimpleFeatures {
        values: j.values().clone(),
        mask: j.mask().to_matrix(),
        delta: time_intervals(j),
    }
}
