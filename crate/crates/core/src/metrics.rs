//! Ranking metrics for binary risk scores.
//!
//! AUROC is the Mann–Whitney statistic with ties credited one half. AUPRC is
//! average precision, stepping through descending unique score thresholds
//! with tied scores treated as a single threshold.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Scores paired with 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(Error::Invalid(format!(
                "need equal, non-zero numbers of scores and labels ({} vs {})",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                what: "scores".into(),
                index,
            });
        }
        if labels.iter().any(|l| *l > 1) {
            return Err(Error::Invalid("labels must be 0 or 1".into()));
        }
        Ok(ScoredSet { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| **l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }

    pub fn prevalence(&self) -> f64 {
        self.positives() as f64 / self.labels.len() as f64
    }

    /// Groups of `(positives, negatives)` sharing a score, in score order.
    fn tie_groups(&self, descending: bool) -> Vec<(u64, u64)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            let o = self.scores[a].total_cmp(&self.scores[b]);
            if descending {
                o.reverse()
            } else {
                o
            }
        });
        let mut groups: Vec<(u64, u64)> = Vec::new();
        let mut prev: Option<f64> = None;
        for i in order {
            let s = self.scores[i];
            // −0.0 and 0.0 tie
            if prev.is_none_or(|p| p.partial_cmp(&s) != Some(Ordering::Equal)) {
                groups.push((0, 0));
                prev = Some(s);
            }
            let g = groups.last_mut().expect("pushed above");
            if self.labels[i] == 1 {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        groups
    }
}

/// Mann–Whitney AUROC from integer win and tie counts.
pub fn auroc_from_counts(wins: u64, ties: u64, positives: u64, negatives: u64) -> f64 {
    (wins as f64 + 0.5 * ties as f64) / (positives as f64 * negatives as f64)
}

/// Area under the ROC curve, `O(n log n)`.
pub fn auroc(s: &ScoredSet) -> Result<f64> {
    let (pos, neg) = (s.positives() as u64, s.negatives() as u64);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!("AUROC over {pos} positives and {neg} negatives")));
    }
    let mut neg_below = 0u64;
    let mut wins = 0u64;
    let mut ties = 0u64;
    for (gp, gn) in s.tie_groups(false) {
        wins += gp * neg_below;
        ties += gp * gn;
        neg_below += gn;
    }
    Ok(auroc_from_counts(wins, ties, pos, neg))
}

/// Average precision: `Σ_k (R_k − R_{k−1}) · P_k` over descending thresholds.
pub fn auprc(s: &ScoredSet) -> Result<f64> {
    let pos = s.positives() as u64;
    if pos == 0 {
        return Err(Error::SingleClass("AUPRC needs at least one positive".into()));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (gp, gn) in s.tie_groups(true) {
        tp += gp;
        fp += gn;
        if gp == 0 {
            continue;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}
