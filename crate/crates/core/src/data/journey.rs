use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Binary observation mask, `features × steps`, `true` = observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, observed: bool) -> Self {
        Mask {
            rows,
            cols,
            bits: vec![observed; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    pub fn observed_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn missing_count(&self) -> usize {
        self.bits.len() - self.observed_count()
    }

    pub fn all_observed(&self) -> bool {
        self.bits.iter().all(|b| *b)
    }

    /// 0/1 matrix of the same shape.
    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.cols, |r, c| {
            if self.get(r, c) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// One patient's record sequence: `N × T` raw values with a parallel mask.
///
/// Unobserved cells hold `0.0`; the mask, not the value, decides whether a
/// cell was observed, since a raw zero can be a legitimate reading.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientJourney {
    pub id: String,
    pub label: u8,
    values: DenseMatrix,
    mask: Mask,
    times: Option<Vec<f64>>,
}

impl PatientJourney {
    pub fn new(
        id: impl Into<String>,
        label: u8,
        mut values: DenseMatrix,
        mask: Mask,
        times: Option<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        if label > 1 {
            return Err(Error::Invalid(format!("journey {id}: label must be 0 or 1, got {label}")));
        }
        if values.shape() != (mask.rows(), mask.cols()) {
            return Err(Error::ShapeMismatch {
                op: "journey values/mask",
                left: values.shape(),
                right: (mask.rows(), mask.cols()),
            });
        }
        if values.cols() == 0 {
            return Err(Error::Invalid(format!("journey {id}: no records")));
        }
        if !values.is_finite() {
            return Err(Error::Invalid(format!("journey {id}: non-finite value")));
        }
        if let Some(ts) = &times {
            if ts.len() != values.cols() {
                return Err(Error::Invalid(format!(
                    "journey {id}: {} timestamps for {} records",
                    ts.len(),
                    values.cols()
                )));
            }
            if ts.iter().any(|t| !t.is_finite()) || ts.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Invalid(format!(
                    "journey {id}: timestamps must be finite and non-decreasing"
                )));
            }
        }
        for r in 0..mask.rows() {
            for c in 0..mask.cols() {
                if !mask.get(r, c) {
                    values.set(r, c, 0.0);
                }
            }
        }
        Ok(PatientJourney {
            id,
            label,
            values,
            mask,
            times,
        })
    }

    /// Builds from records-as-rows (`T × N`), `None` marking a missing cell.
    pub fn from_records(
        id: impl Into<String>,
        label: u8,
        records: &[Vec<Option<f64>>],
        times: Option<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        let t_len = records.len();
        let n = records.first().map_or(0, Vec::len);
        let mut values = DenseMatrix::zeros(n, t_len);
        let mut mask = Mask::new(n, t_len, false);
        for (t, rec) in records.iter().enumerate() {
            if rec.len() != n {
                return Err(Error::FeatureCount {
                    id,
                    expected: n,
                    found: rec.len(),
                });
            }
            for (f, v) in rec.iter().enumerate() {
                if let Some(v) = v {
                    values.set(f, t, *v);
                    mask.set(f, t, true);
                }
            }
        }
        Self::new(id, label, values, mask, times)
    }

    pub fn n_features(&self) -> usize {
        self.values.rows()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.cols() == 0
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    /// Time axis: timestamps when present, else the record index.
    pub fn time_axis(&self) -> Vec<f64> {
        match &self.times {
            Some(ts) => ts.clone(),
            None => (0..self.len()).map(|t| t as f64).collect(),
        }
    }

    #[inline]
    pub fn value(&self, feature: usize, step: usize) -> Option<f64> {
        self.mask.get(feature, step).then(|| self.values.get(feature, step))
    }

    /// Records-as-rows view used by the file format.
    pub fn to_records(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.len())
            .map(|t| (0..self.n_features()).map(|f| self.value(f, t)).collect())
            .collect()
    }

    /// Mean of observed cells per feature; `None` for never-observed features.
    pub fn observed_means(&self) -> Vec<Option<f64>> {
        (0..self.n_features())
            .map(|f| {
                let (sum, count) = (0..self.len())
                    .filter_map(|t| self.value(f, t))
                    .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                (count > 0).then(|| sum / count as f64)
            })
            .collect()
    }
}
