//! Multi-class confusion matrix with per-class precision, recall and F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold count.
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub class_names: Vec<String>,
    /// `matrix[gold][pred]`.
    pub matrix: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean F1 over classes present in gold or predictions.
    pub macro_f1: f64,
    pub accuracy: f64,
}

/// Confusion statistics for labels in `0..class_names.len()`.
pub fn confusion(pred: &[usize], gold: &[usize], class_names: &[&str]) -> Result<ConfusionReport> {
    if pred.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "prediction count {} differs from gold count {}",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("no labels to score".into()));
    }
    let c = class_names.len();
    let mut matrix = vec![vec![0usize; c]; c];
    for (&p, &g) in pred.iter().zip(gold) {
        if p >= c || g >= c {
            return Err(Error::InvalidArgument(format!("label out of range 0..{c}")));
        }
        matrix[g][p] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = matrix[k][k] as f64;
            let support: usize = matrix[k].iter().sum();
            let predicted: usize = matrix.iter().map(|row| row[k]).sum();
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
                predicted,
            }
        })
        .collect();
    let present: Vec<&ClassMetrics> = per_class
        .iter()
        .filter(|m| m.support > 0 || m.predicted > 0)
        .collect();
    let macro_f1 = present.iter().map(|m| m.f1).sum::<f64>() / present.len() as f64;
    let correct: usize = (0..c).map(|k| matrix[k][k]).sum();
    Ok(ConfusionReport {
        class_names: class_names.iter().map(|s| s.to_string()).collect(),
        matrix,
        per_class,
        macro_f1,
        accuracy: correct as f64 / pred.len() as f64,
    })
}

impl ConfusionReport {
    pub fn to_table(&self) -> String {
        let w = self
            .class_names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(4)
            .max(9);
        let mut out = format!("{:<w$}", "gold\\pred");
        for name in &self.class_names {
            out.push_str(&format!(" {name:>w$}"));
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.matrix) {
            out.push_str(&format!("{name:<w$}"));
            for v in row {
                out.push_str(&format!(" {v:>w$}"));
            }
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&format!(
            "{:<w$} {:>9} {:>9} {:>9} {:>9}\n",
            "class", "precision", "recall", "f1", "support"
        ));
        for (name, m) in self.class_names.iter().zip(&self.per_class) {
            out.push_str(&format!(
                "{name:<w$} {:>9.4} {:>9.4} {:>9.4} {:>9}\n",
                m.precision, m.recall, m.f1, m.support
            ));
        }
        out.push_str(&format!("macro-F1 {:.4}  accuracy {:.4}\n", self.macro_f1, self.accuracy));
        out
    }
}
