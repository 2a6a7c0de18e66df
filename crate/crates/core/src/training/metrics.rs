use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

/// Binary classification scores, each in [0, 1]. Precision and recall refer
/// to the spreader class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 5] = ["f1_macro", "f1_weighted", "accuracy", "precision", "recall"];

    pub fn values(&self) -> [f64; 5] {
        [self.f1_macro, self.f1_weighted, self.accuracy, self.precision, self.recall]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        MetricSet {
            f1_macro: v[0],
            f1_weighted: v[1],
            accuracy: v[2],
            precision: v[3],
            recall: v[4],
        }
    }
}

/// `num / den`, or 0 when the denominator is 0.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

/// Macro F1 averages over the classes that occur in either labels or
/// predictions; weighted F1 weights each class by its label support.
pub fn compute_metrics(labels: &[Label], predictions: &[Label]) -> Result<MetricSet> {
    if labels.len() != predictions.len() {
        return Err(Error::Input(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Input("no labels to score".into()));
    }
    // confusion[truth][predicted]
    let mut confusion = [[0usize; 2]; 2];
    for (t, p) in labels.iter().zip(predictions) {
        confusion[t.index()][p.index()] += 1;
    }
    let total = labels.len() as f64;
    let mut macro_sum = 0.0;
    let mut present = 0usize;
    let mut weighted = 0.0;
    for c in 0..2 {
        let tp = confusion[c][c] as f64;
        let predicted = (confusion[0][c] + confusion[1][c]) as f64;
        let support = (confusion[c][0] + confusion[c][1]) as f64;
        let score = f1(ratio(tp, predicted), ratio(tp, support));
        if predicted > 0.0 || support > 0.0 {
            present += 1;
            macro_sum += score;
        }
        weighted += support * score;
    }
    let f1_macro = ratio(macro_sum, present as f64);
    let tp = confusion[1][1] as f64;
    Ok(MetricSet {
        f1_macro,
        f1_weighted: weighted / total,
        accuracy: (confusion[0][0] + confusion[1][1]) as f64 / total,
        precision: ratio(tp, (confusion[0][1] + confusion[1][1]) as f64),
        recall: ratio(tp, (confusion[1][0] + confusion[1][1]) as f64),
    })
}
