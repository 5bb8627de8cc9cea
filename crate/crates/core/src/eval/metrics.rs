//! Window-level confusion counts and the derived classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_labels(truth: &[u8], predicted: &[u8]) -> ConfusionCounts {
        let mut c = ConfusionCounts::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (1, 1) => c.tp += 1,
                (0, 0) => c.tn += 1,
                (0, _) => c.fp += 1,
                _ => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Accuracy, precision, recall and F1; a zero denominator yields 0.
pub fn classification_metrics(c: &ConfusionCounts) -> Result<ClassificationMetrics> {
    if c.total() == 0 {
        return Err(Error::Empty("confusion counts".into()));
    }
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let precision = safe_div(tp, tp + fp);
    let recall = safe_div(tp, tp + fn_);
    Ok(ClassificationMetrics {
        accuracy: (tp + tn) / (tp + tn + fp + fn_),
        precision,
        recall,
        // equals 2PR/(P+R), evaluated as one division of exact counts
        f1: safe_div(2.0 * tp, 2.0 * tp + fp + fn_),
    })
}

/// F1 of `predicted` against `truth`, 0 when undefined or empty.
pub fn f1_score(truth: &[u8], predicted: &[u8]) -> f64 {
    classification_metrics(&ConfusionCounts::from_labels(truth, predicted)).map_or(0.0, |m| m.f1)
}
