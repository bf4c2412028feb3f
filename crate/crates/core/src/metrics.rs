//! Confusion matrices and the per-class rates derived from them.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossSpec;

/// `rows[t][p]` counts samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<Vec<u64>>", into = "Vec<Vec<u64>>"))]
pub struct ConfusionMatrix {
    k: usize,
    cells: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self { k, cells: vec![0; k * k] }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::Empty("confusion matrix"));
        }
        let mut cells = Vec::with_capacity(k * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::LengthMismatch {
                    what: "confusion matrix row",
                    expected: k,
                    actual: row.len(),
                });
            }
            cells.extend(row);
        }
        Ok(Self { k, cells })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.cells[truth * self.k + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.cells[truth * self.k + pred] += 1;
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.cells.chunks(self.k.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|c| self.get(c, c)).sum()
    }

    /// Number of samples whose true class is `c`.
    pub fn support(&self, c: usize) -> u64 {
        (0..self.k).map(|p| self.get(c, p)).sum()
    }

    /// Number of samples predicted as `c`.
    pub fn predicted(&self, c: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, c)).sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::Empty("confusion matrix")),
            n => Ok(self.trace() as f64 / n as f64),
        }
    }

    /// `M[c][c] / support(c)`, `None` when the class has no samples.
    pub fn recall(&self, c: usize) -> Option<f64> {
        ratio(self.get(c, c), self.support(c))
    }

    /// `M[c][c] / predicted(c)`, `None` when nothing was predicted as `c`.
    pub fn precision(&self, c: usize) -> Option<f64> {
        ratio(self.get(c, c), self.predicted(c))
    }

    /// Harmonic mean of precision and recall; 0 when both are 0 or undefined.
    pub fn f1(&self, c: usize) -> f64 {
        let p = self.precision(c).unwrap_or(0.0);
        let r = self.recall(c).unwrap_or(0.0);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Recall per class, with undefined rates reported as 0.
    pub fn per_class_recall(&self) -> Vec<f64> {
        (0..self.k).map(|c| self.recall(c).unwrap_or(0.0)).collect()
    }

    /// Precision per class, with undefined rates reported as 0.
    pub fn per_class_precision(&self) -> Vec<f64> {
        (0..self.k).map(|c| self.precision(c).unwrap_or(0.0)).collect()
    }

    pub fn macro_f1(&self) -> Result<f64> {
        if self.total() == 0 {
            return Err(Error::Empty("confusion matrix"));
        }
        Ok((0..self.k).map(|c| self.f1(c)).sum::<f64>() / self.k as f64)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl TryFrom<Vec<Vec<u64>>> for ConfusionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<ConfusionMatrix> for Vec<Vec<u64>> {
    fn from(m: ConfusionMatrix) -> Self {
        m.rows()
    }
}

/// Counts `(truth, pred)` pairs into a `k x k` matrix.
pub fn confusion(preds: &[usize], truth: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            expected: truth.len(),
            actual: preds.len(),
        });
    }
    let mut m = ConfusionMatrix::zeros(k);
    for (&p, &t) in preds.iter().zip(truth) {
        for label in [p, t] {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, k });
            }
        }
        m.add(t, p);
    }
    Ok(m)
}

/// Formats a rate in `[0, 1]` as a percentage with two decimals, e.g. `"97.81"`.
pub fn percent(rate: f64) -> String {
    format!("{:.2}", rate * 100.0)
}

/// Rates rendered as two-decimal percentage strings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PercentSummary {
    pub accuracy: String,
    pub recall: Vec<String>,
    pub precision: Vec<String>,
    pub macro_f1: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvaluationReport {
    pub loss: LossSpec,
    pub seed: u64,
    pub confusion: ConfusionMatrix,
    pub support: Vec<u64>,
    pub accuracy: f64,
    pub per_class_recall: Vec<f64>,
    pub per_class_precision: Vec<f64>,
    pub macro_f1: f64,
    /// Classes whose recall has a zero denominator (reported as 0).
    pub recall_undefined: Vec<usize>,
    /// Classes whose precision has a zero denominator (reported as 0).
    pub precision_undefined: Vec<usize>,
    pub percent: PercentSummary,
}

impl EvaluationReport {
    pub fn new(confusion: ConfusionMatrix, loss: LossSpec, seed: u64) -> Result<Self> {
        let accuracy = confusion.accuracy()?;
        let macro_f1 = confusion.macro_f1()?;
        let k = confusion.k();
        let per_class_recall = confusion.per_class_recall();
        let per_class_precision = confusion.per_class_precision();
        let percent = PercentSummary {
            accuracy: percent(accuracy),
            recall: per_class_recall.iter().map(|&r| percent(r)).collect(),
            precision: per_class_precision.iter().map(|&p| percent(p)).collect(),
            macro_f1: percent(macro_f1),
        };
        Ok(Self {
            support: (0..k).map(|c| confusion.support(c)).collect(),
            recall_undefined: (0..k).filter(|&c| confusion.recall(c).is_none()).collect(),
            precision_undefined: (0..k).filter(|&c| confusion.precision(c).is_none()).collect(),
            confusion,
            accuracy,
            per_class_recall,
            per_class_precision,
            macro_f1,
            loss,
            seed,
            percent,
        })
    }
}
