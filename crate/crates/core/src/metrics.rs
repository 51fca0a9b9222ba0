//! Confusion matrices, one-vs-rest precision/recall/F1, accuracy and
//! normal-approximation confidence intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Two-sided 95% normal multiplier.
pub const DEFAULT_Z: f64 = 1.96;

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let k = class_names.len();
        ConfusionMatrix {
            counts: vec![vec![0; k]; k],
            class_names,
        }
    }

    /// Matrix with classes named `0..k`.
    pub fn unnamed(k: usize) -> Self {
        Self::new((0..k).map(|i| i.to_string()).collect())
    }

    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        let k = class_names.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("confusion matrix must be {k}x{k}")));
        }
        Ok(ConfusionMatrix {
            counts,
            class_names,
        })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.classes();
        if truth >= k || predicted >= k {
            return Err(Error::Argument(format!(
                "label pair ({truth}, {predicted}) out of range for {k} classes"
            )));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn column_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Argument(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::unnamed(k);
    for (&t, &p) in truth.iter().zip(predicted) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// One-vs-rest scores per class; empty denominators score 0.
pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassScores> {
    (0..cm.classes())
        .map(|c| {
            let tp = cm.get(c, c);
            let predicted = cm.column_sum(c);
            let actual = cm.row_sum(c);
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            ClassScores {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: actual,
            }
        })
        .collect()
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.trace(), cm.total())
}

/// Unweighted means of precision, recall and F1 across classes.
pub fn macro_average(scores: &[ClassScores]) -> (f64, f64, f64) {
    if scores.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let k = scores.len() as f64;
    (
        scores.iter().map(|s| s.precision).sum::<f64>() / k,
        scores.iter().map(|s| s.recall).sum::<f64>() / k,
        scores.iter().map(|s| s.f1).sum::<f64>() / k,
    )
}

/// Radius `z * sqrt(p(1-p)/n)` of the normal-approximation interval.
pub fn confidence_interval(metric: f64, n: usize, z: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Argument("confidence interval needs n > 0".into()));
    }
    if !(0.0..=1.0).contains(&metric) {
        return Err(Error::Argument(format!("metric {metric} outside [0, 1]")));
    }
    if z.is_nan() || z <= 0.0 {
        return Err(Error::Argument(format!("z must be positive, got {z}")));
    }
    Ok(z * (metric * (1.0 - metric) / n as f64).sqrt())
}

/// `[metric - r, metric + r]` clamped to `[0, 1]`; a zero count gives a
/// degenerate interval.
pub fn interval(metric: f64, n: u64, z: f64) -> [f64; 2] {
    let r = confidence_interval(metric, n as usize, z).unwrap_or(0.0);
    [(metric - r).max(0.0), (metric + r).min(1.0)]
}

/// Fraction of rows whose true label is among the `k` highest scores.
pub fn top_k_accuracy(scores: &Tensor, labels: &[usize], k: usize) -> Result<f64> {
    if scores.rank() != 2 || scores.shape()[0] != labels.len() {
        return Err(Error::Shape(format!(
            "top-k: scores {:?} do not match {} labels",
            scores.shape(),
            labels.len()
        )));
    }
    let classes = scores.shape()[1];
    if k == 0 || k > classes {
        return Err(Error::Argument(format!("top-k needs 1 <= k <= {classes}, got {k}")));
    }
    let mut hits = 0usize;
    for (row, &label) in scores.data().chunks(classes).zip(labels) {
        let target = row[label];
        // rank = number of classes that beat the label, ties resolved by index
        let better = row
            .iter()
            .enumerate()
            .filter(|&(j, &v)| v > target || (v == target && j < label))
            .count();
        if better < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Interval around `f1`.
    pub ci: [f64; 2],
    pub precision_ci: [f64; 2],
    pub recall_ci: [f64; 2],
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<ClassReport>,
    pub accuracy: f64,
    pub accuracy_ci: [f64; 2],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub z: f64,
    pub samples: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<TopK>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub k: usize,
    pub accuracy: f64,
}

impl MetricsReport {
    /// Per-class intervals use the class support as the sample count; the
    /// accuracy interval uses the total.
    pub fn from_confusion(cm: &ConfusionMatrix, z: f64) -> Self {
        let scores = per_class_metrics(cm);
        let classes = scores
            .iter()
            .zip(cm.class_names())
            .map(|(s, name)| ClassReport {
                name: name.clone(),
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
                ci: interval(s.f1, s.support, z),
                precision_ci: interval(s.precision, s.support, z),
                recall_ci: interval(s.recall, s.support, z),
                support: s.support,
            })
            .collect();
        let (macro_precision, macro_recall, macro_f1) = macro_average(&scores);
        let acc = accuracy(cm);
        MetricsReport {
            classes,
            accuracy: acc,
            accuracy_ci: interval(acc, cm.total(), z),
            macro_precision,
            macro_recall,
            macro_f1,
            z,
            samples: cm.total(),
            top_k: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Argument(format!("metrics report: {e}")))
    }
}
