//! Turning raw journeys into model-input matrices. Every statistic used
//! here is fitted on the training split only.

use serde::{Deserialize, Serialize};

use crate::baselines::{self, KnnImputer};
use crate::data::{Dataset, NormMode, Normalizer, PatientJourney, STAT_FLOOR};
use crate::error::Result;
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Normalized observed values, missing cells exactly 0.
    ZeroFill,
    MeanImpute,
    KnnImpute,
    /// Values, mask and intervals stacked to `3N` rows.
    Simple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub representation: Representation,
    /// Serialized separately at the checkpoint's top level.
    #[serde(skip)]
    pub normalizer: Normalizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn: Option<KnnImputer>,
    /// Per-feature divisor for interval rows (training max interval).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_scale: Option<Vec<f64>>,
}

impl Preprocessor {
    pub fn zero_fill(normalizer: Normalizer) -> Self {
        Preprocessor {
            representation: Representation::ZeroFill,
            normalizer,
            knn: None,
            delta_scale: None,
        }
    }

    pub fn fit(train: &Dataset, representation: Representation, mode: NormMode, knn_k: usize) -> Result<Self> {
        let normalizer = Normalizer::fit(train, mode);
        let mut pre = Self::zero_fill(normalizer);
        pre.representation = representation;
        match representation {
            Representation::KnnImpute => pre.knn = Some(KnnImputer::fit(train, knn_k.min(train.len()))?),
            Representation::Simple => {
                let mut scale = vec![STAT_FLOOR; train.n_features()];
                for j in train.journeys() {
                    let d = baselines::time_intervals(j);
                    for (f, s) in scale.iter_mut().enumerate() {
                        *s = d.row(f).iter().fold(*s, |m, v| m.max(*v));
                    }
                }
                pre.delta_scale = Some(scale);
            }
            Representation::ZeroFill | Representation::MeanImpute => {}
        }
        Ok(pre)
    }

    pub fn n_features(&self) -> usize {
        self.normalizer.n_features()
    }

    /// Rows of the matrices produced by [`Self::transform`].
    pub fn input_width(&self) -> usize {
        match self.representation {
            Representation::Simple => 3 * self.n_features(),
            _ => self.n_features(),
        }
    }

    pub fn transform(&self, j: &PatientJourney) -> Result<DenseMatrix> {
        let norm = &self.normalizer;
        Ok(match self.representation {
            Representation::ZeroFill => norm.prepare_matrix(j),
            Representation::MeanImpute => {
                DenseMatrix::from_fn(j.n_features(), j.len(), |f, t| norm.scale(f, j.value(f, t).unwrap_or(norm.mean[f])))
            }
            Representation::KnnImpute => {
                let knn = self.knn.as_ref().expect("knn preprocessor carries its reference set");
                let (filled, _) = knn.impute_journey(j)?;
                norm.prepare_matrix(&filled)
            }
            Representation::Simple => {
                let n = j.n_features();
                let scale = self.delta_scale.as_ref().expect("simple preprocessor carries interval scale");
                let s = baselines::simple_features(j);
                let values = norm.prepare_matrix(j);
                DenseMatrix::from_fn(3 * n, j.len(), |r, c| match r / n {
                    0 => values.get(r, c),
                    1 => s.mask.get(r - n, c),
                    _ => s.delta.get(r - 2 * n, c) / scale[r - 2 * n],
                })
            }
        })
    }

    pub fn prepare(&self, ds: &Dataset) -> Result<PreparedSet> {
        let mut set = PreparedSet::default();
        for j in ds.journeys() {
            set.ids.push(j.id.clone());
            set.labels.push(j.label);
            set.inputs.push(self.transform(j)?);
        }
        Ok(set)
    }
}

/// Model-ready inputs with their ids and labels, in dataset order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreparedSet {
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub inputs: Vec<DenseMatrix>,
}

impl PreparedSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}
