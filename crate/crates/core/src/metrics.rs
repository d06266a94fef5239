//! Confusion matrices and one-vs-rest rates with macro averages.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgproc::{save_gray_png, GrayImage, ImageError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("actual has {actual} labels, predicted has {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("no labels to score")]
    Empty,
    #[error("class index {0} is not in the matrix")]
    UnknownClass(usize),
    #[error("malformed report: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Rows are actual classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Same matrix with classes reordered so that new class `i` is old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            classes: perm.iter().map(|&p| self.classes[p].clone()).collect(),
            counts: perm.iter().map(|&r| perm.iter().map(|&c| self.counts[r][c]).collect()).collect(),
        }
    }
}

pub fn confuse(
    classes: &[impl AsRef<str>],
    actual: &[usize],
    predicted: &[usize],
) -> Result<ConfusionMatrix, MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&a, &p) in actual.iter().zip(predicted) {
        if a >= k {
            return Err(MetricsError::UnknownClass(a));
        }
        if p >= k {
            return Err(MetricsError::UnknownClass(p));
        }
        counts[a][p] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.iter().map(|c| c.as_ref().to_string()).collect(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneVsRest {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

pub fn one_vs_rest(cm: &ConfusionMatrix, class: usize) -> Result<OneVsRest, MetricsError> {
    let k = cm.classes.len();
    if class >= k {
        return Err(MetricsError::UnknownClass(class));
    }
    let tp = cm.counts[class][class];
    let row: u64 = cm.counts[class].iter().sum();
    let col: u64 = cm.counts.iter().map(|r| r[class]).sum();
    let (fn_, fp) = (row - tp, col - tp);
    Ok(OneVsRest {
        tp,
        tn: cm.total() - tp - fn_ - fp,
        fp,
        fn_,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    #[serde(flatten)]
    pub counts: OneVsRest,
    pub precision: f64,
    pub recall: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    /// Rates whose denominator was zero and were reported as 0.
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_specificity: f64,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn report(cm: &ConfusionMatrix) -> MetricReport {
    let k = cm.classes.len();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let o = one_vs_rest(cm, c).expect("index in range");
            let mut undefined = Vec::new();
            let precision = ratio(o.tp, o.tp + o.fp, "precision", &mut undefined);
            let recall = ratio(o.tp, o.tp + o.fn_, "recall", &mut undefined);
            let specificity = ratio(o.tn, o.tn + o.fp, "specificity", &mut undefined);
            if precision + recall == 0.0 {
                undefined.push("f1".into());
            }
            ClassMetrics {
                class: cm.classes[c].clone(),
                counts: o,
                precision,
                recall,
                sensitivity: recall,
                specificity,
                f1: f1_score(precision, recall),
                undefined,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if k == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / k as f64
        }
    };
    let total = cm.total();
    MetricReport {
        accuracy: if total == 0 { 0.0 } else { cm.trace() as f64 / total as f64 },
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_specificity: mean(|m| m.specificity),
        macro_f1: mean(|m| m.f1),
        confusion: cm.clone(),
        per_class,
    }
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Confusion matrix followed by the per-class and macro rows.
    pub fn to_table(&self) -> String {
        let cm = &self.confusion;
        let w = cm.classes.iter().map(String::len).max().unwrap_or(5).max(9);
        let mut out = String::new();
        let _ = write!(out, "{:>w$}", "actual\\pred");
        for c in &cm.classes {
            let _ = write!(out, " {c:>w$}");
        }
        out.push('\n');
        for (c, row) in cm.classes.iter().zip(&cm.counts) {
            let _ = write!(out, "{c:>w$}");
            for v in row {
                let _ = write!(out, " {v:>w$}");
            }
            out.push('\n');
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>w$} {:>5} {:>5} {:>5} {:>5} {:>9} {:>9} {:>11} {:>9}",
            "class", "tp", "tn", "fp", "fn", "precision", "recall", "specificity", "f1"
        );
        for m in &self.per_class {
            let flag = if m.undefined.is_empty() { "" } else { " *" };
            let _ = writeln!(
                out,
                "{:>w$} {:>5} {:>5} {:>5} {:>5} {:>9.4} {:>9.4} {:>11.4} {:>9.4}{flag}",
                m.class, m.counts.tp, m.counts.tn, m.counts.fp, m.counts.fn_, m.precision, m.recall, m.specificity, m.f1
            );
        }
        let _ = writeln!(
            out,
            "{:>w$} {:>5} {:>5} {:>5} {:>5} {:>9.4} {:>9.4} {:>11.4} {:>9.4}",
            "macro", "", "", "", "", self.macro_precision, self.macro_recall, self.macro_specificity, self.macro_f1
        );
        let _ = writeln!(out, "accuracy: {:.4} ({} / {})", self.accuracy, cm.trace(), cm.total());
        if self.per_class.iter().any(|m| !m.undefined.is_empty()) {
            out.push_str("* some rates had a zero denominator and are reported as 0\n");
        }
        out
    }
}

/// Grayscale grid, one `cell`-pixel square per matrix entry, brightness
/// proportional to the entry's share of its actual-class row.
pub fn heat_grid(cm: &ConfusionMatrix, cell: usize) -> Result<GrayImage, MetricsError> {
    let k = cm.classes.len();
    let side = k * cell;
    let mut px = vec![0u8; side * side];
    for (r, row) in cm.counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        for (c, &v) in row.iter().enumerate() {
            let shade = (255 * v).checked_div(total).unwrap_or(0) as u8;
            for y in r * cell..(r + 1) * cell {
                for x in c * cell..(c + 1) * cell {
                    // one-pixel gridline between cells
                    let edge = x % cell == 0 || y % cell == 0;
                    px[y * side + x] = if edge { 64 } else { shade };
                }
            }
        }
    }
    Ok(GrayImage::new(side, side, px)?)
}

pub fn save_heat_grid(cm: &ConfusionMatrix, path: &Path) -> Result<(), MetricsError> {
    save_gray_png(&heat_grid(cm, 48)?, path)?;
    Ok(())
}
