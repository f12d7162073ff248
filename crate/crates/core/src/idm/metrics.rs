use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::write_atomic;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    /// Scores `pred` against `gold` over the label set `labels`.
    ///
    /// Undefined precision, recall or F1 (a zero denominator) count as 0.
    pub fn from_labels<S: AsRef<str>>(gold: &[S], pred: &[S], labels: &[String]) -> Self {
        assert_eq!(gold.len(), pred.len(), "gold and predicted label counts differ");
        let correct = gold.iter().zip(pred).filter(|(g, p)| g.as_ref() == p.as_ref()).count();
        let mut per_class = BTreeMap::new();
        for label in labels {
            let l = label.as_str();
            let tp = gold.iter().zip(pred).filter(|(g, p)| g.as_ref() == l && p.as_ref() == l).count();
            let support = gold.iter().filter(|g| g.as_ref() == l).count();
            let predicted = pred.iter().filter(|p| p.as_ref() == l).count();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            per_class.insert(
                label.clone(),
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support,
                },
            );
        }
        let macro_f1 = if labels.is_empty() {
            0.0
        } else {
            per_class.values().map(|c| c.f1).sum::<f64>() / labels.len() as f64
        };
        Metrics {
            accuracy: ratio(correct, gold.len()),
            macro_f1,
            per_class,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialise")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}
