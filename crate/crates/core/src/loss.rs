//! Softmax-family losses with exact gradients with respect to the logits.

use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margin::{effective_numbers, ClassStats, EffectiveNumberParams, MarginSchedule};

mod gradcheck;

pub use gradcheck::{finite_diff_check, gradient_relative_error, GradCheck, GradCheckReport, LossFamily};

/// Loss value and its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Class-balanced weights `1 / E(n_j)`, rescaled so they sum to `k`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ClassWeights {
    weights: Vec<f64>,
    beta: f64,
}

impl ClassWeights {
    /// Wraps explicit weights. They must be finite and positive; they are
    /// used as given, without renormalization.
    pub fn from_weights(weights: Vec<f64>, beta: f64) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::TooFewClasses(weights.len()));
        }
        for &w in &weights {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::NonPositive { name: "class weight", value: w });
            }
        }
        Ok(Self { weights, beta })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }
}

/// The loss to train with.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LossSpec {
    #[cfg_attr(feature = "serde", serde(rename = "ce"))]
    CrossEntropy,
    #[cfg_attr(feature = "serde", serde(rename = "cb_ce"))]
    ClassBalanced { weights: ClassWeights },
    Margin { margins: MarginSchedule, scale: f64 },
}

impl LossSpec {
    pub fn margin(margins: MarginSchedule, scale: f64) -> Result<Self> {
        check_scale(scale)?;
        Ok(Self::Margin { margins, scale })
    }

    /// Number of classes the spec is bound to, if any.
    pub fn k(&self) -> Option<usize> {
        match self {
            Self::CrossEntropy => None,
            Self::ClassBalanced { weights } => Some(weights.k()),
            Self::Margin { margins, .. } => Some(margins.k()),
        }
    }

    pub fn name(&self) -> String {
        use crate::margin::MarginMode;
        let s = match self {
            Self::CrossEntropy => "CE",
            Self::ClassBalanced { .. } => "CB-CE",
            Self::Margin { margins, .. } => match margins.mode() {
                MarginMode::Ldam { .. } => "LDAM",
                MarginMode::EffectiveLdam { .. } => "E-LDAM",
                MarginMode::Custom => "MARGIN",
            },
        };
        String::from(s)
    }

    pub fn evaluate(&self, z: &[f64], y: usize) -> Result<LossResult> {
        match self {
            Self::CrossEntropy => ce_loss(z, y),
            Self::ClassBalanced { weights } => cb_ce_loss(z, y, weights),
            Self::Margin { margins, scale } => margin_loss(z, y, margins, *scale),
        }
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name: "scale", value: scale })
    }
}

fn check_logits(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    Ok(())
}

fn check_label(y: usize, k: usize) -> Result<()> {
    if y >= k {
        Err(Error::LabelOutOfRange { label: y, k })
    } else {
        Ok(())
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Log-sum-exp pieces: the max logit, its index, and the sum of
/// `exp(z_j - max)` over every other entry.
fn lse_parts(z: &[f64]) -> (f64, usize, f64) {
    let top = argmax(z);
    let max = z[top];
    let rest = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &v)| libm::exp(v - max))
        .sum();
    (max, top, rest)
}

/// Softmax with the max subtracted before exponentiating.
pub fn stable_softmax(z: &[f64]) -> Result<Vec<f64>> {
    check_logits(z)?;
    let (max, _, rest) = lse_parts(z);
    let denom = 1.0 + rest;
    Ok(z.iter().map(|&v| libm::exp(v - max) / denom).collect())
}

/// `-log softmax(z)[y]` and `softmax(z) - onehot(y)`, in log space.
///
/// With `rest = sum_{j != top} exp(z_j - max)` the loss is
/// `(max - z_y) + log1p(rest)`, which stays accurate when the loss is tiny.
fn xent(z: &[f64], y: usize) -> LossResult {
    let (max, top, rest) = lse_parts(z);
    let denom = 1.0 + rest;
    let loss = (max - z[y]) + libm::log1p(rest);
    let mut grad: Vec<f64> = z.iter().map(|&v| libm::exp(v - max) / denom).collect();
    grad[y] = if y == top { -rest / denom } else { grad[y] - 1.0 };
    LossResult { loss, grad }
}

/// Plain softmax cross-entropy.
pub fn ce_loss(z: &[f64], y: usize) -> Result<LossResult> {
    check_logits(z)?;
    check_label(y, z.len())?;
    Ok(xent(z, y))
}

/// Class-balanced weights from effective numbers, normalized to sum to `k`.
pub fn cb_weights(stats: &ClassStats, params: EffectiveNumberParams) -> ClassWeights {
    let raw: Vec<f64> = effective_numbers(stats, params)
        .into_iter()
        .map(|e| 1.0 / e)
        .collect();
    let sum: f64 = raw.iter().sum();
    let k = raw.len() as f64;
    ClassWeights {
        weights: raw.into_iter().map(|w| w * k / sum).collect(),
        beta: params.beta(),
    }
}

/// Cross-entropy scaled by the weight of the true class.
pub fn cb_ce_loss(z: &[f64], y: usize, w: &ClassWeights) -> Result<LossResult> {
    check_logits(z)?;
    if w.k() != z.len() {
        return Err(Error::LengthMismatch {
            what: "class weights",
            expected: z.len(),
            actual: w.k(),
        });
    }
    check_label(y, z.len())?;
    let wy = w.weights[y];
    let mut r = xent(z, y);
    r.loss *= wy;
    r.grad.iter_mut().for_each(|g| *g *= wy);
    Ok(r)
}

/// Margin softmax loss.
///
/// The true-class logit is shifted down by its margin before scaling:
/// `z'_y = s * (z_y - delta_y)`, `z'_j = s * z_j` otherwise. The loss is
/// cross-entropy on `z'` and the gradient is `s * (softmax(z') - onehot(y))`.
/// With `s = 1` and zero margins this is exactly [`ce_loss`].
pub fn margin_loss(z: &[f64], y: usize, m: &MarginSchedule, scale: f64) -> Result<LossResult> {
    check_logits(z)?;
    check_scale(scale)?;
    if m.k() != z.len() {
        return Err(Error::LengthMismatch {
            what: "margin schedule",
            expected: z.len(),
            actual: m.k(),
        });
    }
    check_label(y, z.len())?;
    let mut adjusted: Vec<f64> = z.iter().map(|&v| scale * v).collect();
    adjusted[y] = scale * (z[y] - m.deltas()[y]);
    let mut r = xent(&adjusted, y);
    if scale != 1.0 {
        r.grad.iter_mut().for_each(|g| *g *= scale);
    }
    Ok(r)
}

/// Mean loss over a batch together with the per-sample gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub mean_loss: f64,
    pub grads: Vec<Vec<f64>>,
}

/// Evaluates `spec` on every `(logits, label)` pair. The returned gradients
/// are per sample and unreduced; the mean reduction is left to the caller.
pub fn batch_loss<I, L>(batch: I, spec: &LossSpec) -> Result<BatchLoss>
where
    I: IntoIterator<Item = (L, usize)>,
    L: AsRef<[f64]>,
{
    let mut total = 0.0;
    let mut grads = Vec::new();
    let mut k = None;
    for (z, y) in batch {
        let z = z.as_ref();
        match k {
            None => k = Some(z.len()),
            Some(k) if k != z.len() => {
                return Err(Error::LengthMismatch {
                    what: "batch logits",
                    expected: k,
                    actual: z.len(),
                })
            }
            _ => {}
        }
        let r = spec.evaluate(z, y)?;
        total += r.loss;
        grads.push(r.grad);
    }
    if grads.is_empty() {
        return Err(Error::Empty("batch"));
    }
    Ok(BatchLoss {
        mean_loss: total / grads.len() as f64,
        grads,
    })
}

#[cfg(test)]
pub(crate) fn onehot(k: usize, y: usize) -> Vec<f64> {
    let mut v = alloc::vec![0.0; k];
    v[y] = 1.0;
    v
}
