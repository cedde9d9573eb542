//! Confusion matrices and support-weighted classification metrics.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::TrainedModel;

/// Accuracy plus support-weighted precision, recall and F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `confusion[i][j]` counts samples of true class `i` predicted as `j`.
    pub confusion: Vec<Vec<u64>>,
    pub n_test: u64,
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::Shape(format!(
                "label pair ({t}, {p}) outside {n_classes} classes"
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Per-class scores with 0/0 taken as 0, averaged with weights equal to each
/// class's share of true samples.
pub fn weighted_metrics(confusion: &[Vec<u64>]) -> Result<MetricsReport> {
    let k = confusion.len();
    if k == 0 || confusion.iter().any(|r| r.len() != k) {
        return Err(Error::Shape("confusion matrix must be square and non-empty".into()));
    }
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::Shape("confusion matrix is all zeros".into()));
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let (mut precision, mut f1) = (0.0, 0.0);
    for c in 0..k {
        let support: u64 = confusion[c].iter().sum();
        if support == 0 {
            continue;
        }
        let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
        let tp = confusion[c][c];
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let w = support as f64 / total as f64;
        precision += w * p;
        f1 += w * f;
    }
    // sum_c (support_c / total) * (tp_c / support_c) reduces to trace / total
    let recall = trace as f64 / total as f64;
    Ok(MetricsReport {
        accuracy: recall,
        precision,
        recall,
        f1,
        confusion: confusion.to_vec(),
        n_test: total,
    })
}

pub fn evaluate(model: &TrainedModel, test: &Dataset) -> Result<MetricsReport> {
    let pred = model.predict(test.matrix.view())?;
    weighted_metrics(&confusion(&test.labels, &pred, model.n_classes)?)
}

/// Element-wise sum of confusion matrices (pooling folds).
pub fn pool(confusions: &[Vec<Vec<u64>>]) -> Result<Vec<Vec<u64>>> {
    let first = confusions
        .first()
        .ok_or_else(|| Error::Shape("nothing to pool".into()))?;
    let mut out = first.clone();
    for m in &confusions[1..] {
        for (ro, r) in out.iter_mut().zip(m) {
            for (o, v) in ro.iter_mut().zip(r) {
                *o += v;
            }
        }
    }
    Ok(out)
}
