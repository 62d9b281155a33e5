use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PatientJourney;
use crate::error::{Error, Result};
use crate::json;

/// Ordered collection of journeys sharing one feature layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    journeys: Vec<PatientJourney>,
    n_features: usize,
    feature_names: Vec<String>,
}

/// Sidecar metadata written next to a dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n_features: usize,
    pub feature_names: Vec<String>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    label: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    times: Option<&'a [f64]>,
    features: Vec<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    imputed_mask: Option<Vec<Vec<u8>>>,
}

#[derive(Deserialize)]
struct RecordIn {
    id: String,
    label: u8,
    #[serde(default)]
    times: Option<Vec<f64>>,
    features: Vec<Vec<Option<f64>>>,
}

pub fn default_feature_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("f{i}")).collect()
}

/// `data.jsonl` → `data.meta.json`.
pub fn metadata_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

impl Dataset {
    pub fn new(
        journeys: Vec<PatientJourney>,
        n_features: usize,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if journeys.is_empty() {
            return Err(Error::TooFewJourneys {
                found: 0,
                required: 1,
            });
        }
        if feature_names.len() != n_features {
            return Err(Error::Invalid(format!(
                "{} feature names for {n_features} features",
                feature_names.len()
            )));
        }
        for j in &journeys {
            if j.n_features() != n_features {
                return Err(Error::FeatureCount {
                    id: j.id.clone(),
                    expected: n_features,
                    found: j.n_features(),
                });
            }
        }
        Ok(Dataset {
            journeys,
            n_features,
            feature_names,
        })
    }

    pub fn journeys(&self) -> &[PatientJourney] {
        &self.journeys
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.journeys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.journeys.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.journeys.iter().map(|j| j.label).collect()
    }

    pub fn positives(&self) -> usize {
        self.journeys.iter().filter(|j| j.label == 1).count()
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Journeys at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let journeys = indices.iter().map(|&i| self.journeys[i].clone()).collect();
        Self::new(journeys, self.n_features, self.feature_names.clone())
    }

    /// Same layout, different journeys.
    pub fn with_journeys(&self, journeys: Vec<PatientJourney>) -> Result<Self> {
        Self::new(journeys, self.n_features, self.feature_names.clone())
    }

    /// Concatenation of two datasets with the same layout.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        let mut journeys = self.journeys.clone();
        journeys.extend(other.journeys.iter().cloned());
        Self::new(journeys, self.n_features, self.feature_names.clone())
    }

    /// JSON Lines text, one journey per line, records as rows.
    pub fn to_jsonl(&self, imputed: Option<&[super::Mask]>) -> String {
        let mut out = String::new();
        for (i, j) in self.journeys.iter().enumerate() {
            let imputed_mask = imputed.map(|masks| {
                let m = &masks[i];
                (0..m.cols())
                    .map(|t| (0..m.rows()).map(|f| u8::from(m.get(f, t))).collect())
                    .collect()
            });
            let rec = RecordOut {
                id: &j.id,
                label: j.label,
                times: j.times(),
                features: j.to_records(),
                imputed_mask,
            };
            out.push_str(&json::to_string(&rec));
            out.push('\n');
        }
        out
    }

    /// Parses JSON Lines text. Blank lines are skipped; line numbers in
    /// errors are 1-based.
    pub fn from_jsonl(text: &str, n_features: Option<usize>, names: Option<Vec<String>>) -> Result<Self> {
        let mut journeys = Vec::new();
        let mut expected = n_features;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            journeys.push(parse_line(line, i + 1, &mut expected)?);
        }
        let n = expected.ok_or(Error::TooFewJourneys {
            found: 0,
            required: 1,
        })?;
        let names = names.unwrap_or_else(|| default_feature_names(n));
        Self::new(journeys, n, names)
    }
}

fn parse_line(line: &str, line_no: usize, expected: &mut Option<usize>) -> Result<PatientJourney> {
    let rec: RecordIn = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        msg: e.to_string(),
    })?;
    let n = *expected.get_or_insert_with(|| rec.features.first().map_or(0, Vec::len));
    if let Some(bad) = rec.features.iter().find(|r| r.len() != n) {
        return Err(Error::FeatureCount {
            id: rec.id,
            expected: n,
            found: bad.len(),
        });
    }
    PatientJourney::from_records(rec.id, rec.label, &rec.features, rec.times).map_err(|e| match e {
        Error::Invalid(msg) => Error::Parse { line: line_no, msg },
        other => other,
    })
}

/// Reads a dataset file plus its sidecar metadata when present.
pub fn load_dataset(path: &Path, expected_n: Option<usize>) -> Result<Dataset> {
    let meta_path = metadata_path(path);
    let meta: Option<DatasetMeta> = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        Some(serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: format!("{}: {e}", meta_path.display()),
        })?)
    } else {
        None
    };
    let mut n = expected_n;
    if let (Some(m), Some(e)) = (&meta, expected_n) {
        if m.n_features != e {
            return Err(Error::Invalid(format!(
                "metadata declares {} features, expected {e}",
                m.n_features
            )));
        }
    }
    if let Some(m) = &meta {
        n = Some(m.n_features);
    }

    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut journeys = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        journeys.push(parse_line(&line, i + 1, &mut n)?);
    }
    let n = n.ok_or_else(|| Error::Invalid(format!("{}: no journeys", path.display())))?;
    let names = meta
        .map(|m| m.feature_names)
        .unwrap_or_else(|| default_feature_names(n));
    Dataset::new(journeys, n, names)
}

/// Writes the dataset and its sidecar metadata.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    save_with_imputed(ds, path, None)
}

pub(crate) fn save_with_imputed(ds: &Dataset, path: &Path, imputed: Option<&[super::Mask]>) -> Result<()> {
    json::write_atomic(path, ds.to_jsonl(imputed).as_bytes())?;
    let meta = json::to_string(&ds.meta());
    json::write_atomic(&metadata_path(path), meta.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"{"id":"a","label":1,"times":[0.0,1.5],"features":[[1.0,null,3.0],[4.0,5.0,null]]}
{"id":"b","label":0,"features":[[null,null,7.0]]}
"#;

    #[test]
    fn parses_fixture() {
        let ds = Dataset::from_jsonl(FIXTURE, None, None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.n_features(), 3);
        let a = &ds.journeys()[0];
        assert_eq!(a.len(), 2);
        assert!(a.mask().get(0, 0) && !a.mask().get(1, 0) && !a.mask().get(2, 1));
        assert_eq!(a.times(), Some(&[0.0, 1.5][..]));
        let b = &ds.journeys()[1];
        assert_eq!(b.mask().observed_count(), 1);
        assert_eq!(b.times(), None);
    }

    #[test]
    fn wrong_row_length_names_journey() {
        let text = "{\"id\":\"ok\",\"label\":0,\"features\":[[1,2]]}\n{\"id\":\"bad\",\"label\":0,\"features\":[[1,2],[3]]}\n";
        let err = Dataset::from_jsonl(text, None, None).unwrap_err();
        assert!(matches!(err, Error::FeatureCount { ref id, .. } if id == "bad"), "{err}");
    }

    #[test]
    fn malformed_line_has_number() {
        let text = "{\"id\":\"ok\",\"label\":0,\"features\":[[1,2]]}\n{not json\n";
        let err = Dataset::from_jsonl(text, None, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = Dataset::from_jsonl(FIXTURE, None, Some(vec!["hr".into(), "sbp".into(), "gcs".into()])).unwrap();
        save_dataset(&ds, &path).unwrap();
        assert!(dir.path().join("d.meta.json").exists());
        let back = load_dataset(&path, Some(3)).unwrap();
        assert_eq!(back, ds);
        assert!(load_dataset(&path, Some(4)).is_err());
    }

    #[test]
    fn writer_key_order() {
        let ds = Dataset::from_jsonl(FIXTURE, None, None).unwrap();
        let text = ds.to_jsonl(None);
        let first = text.lines().next().unwrap();
        let pos = |k: &str| first.find(k).unwrap();
        assert!(pos("\"id\"") < pos("\"label\"") && pos("\"label\"") < pos("\"times\"") && pos("\"times\"") < pos("\"features\""));
        assert!(first.contains("null"));
    }
}
