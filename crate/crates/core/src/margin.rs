//! Effective sample numbers and per-class margin schedules.
//!
//! LDAM assigns class `j` the margin `C / n_j^(1/4)`. The effective-number
//! variant replaces the raw count with `E(n_j) = (1 - beta^n_j) / (1 - beta)`
//! and uses a configurable root: `C / E(n_j)^(1/r)`.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class training sample counts. Every class has at least one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<u64>", into = "Vec<u64>"))]
pub struct ClassStats {
    counts: Vec<u64>,
}

impl ClassStats {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::TooFewClasses(counts.len()));
        }
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass { class });
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `max(counts) / min(counts)`.
    pub fn imbalance_ratio(&self) -> f64 {
        let max = self.counts.iter().copied().max().unwrap_or(1);
        let min = self.counts.iter().copied().min().unwrap_or(1);
        max as f64 / min as f64
    }

    /// Index of the smallest class; ties resolve to the lowest index.
    pub fn minority_class(&self) -> usize {
        let min = self.counts.iter().copied().min().unwrap_or(0);
        self.counts.iter().position(|&c| c == min).unwrap_or(0)
    }
}

impl TryFrom<Vec<u64>> for ClassStats {
    type Error = Error;

    fn try_from(counts: Vec<u64>) -> Result<Self> {
        Self::new(counts)
    }
}

impl From<ClassStats> for Vec<u64> {
    fn from(stats: ClassStats) -> Self {
        stats.counts
    }
}

/// The `beta` hyper-parameter of the effective number, restricted to `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "f64", into = "f64"))]
pub struct EffectiveNumberParams {
    beta: f64,
}

impl EffectiveNumberParams {
    pub const DEFAULT_BETA: f64 = 0.999;

    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidBeta(beta));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for EffectiveNumberParams {
    fn default() -> Self {
        Self {
            beta: Self::DEFAULT_BETA,
        }
    }
}

impl TryFrom<f64> for EffectiveNumberParams {
    type Error = Error;

    fn try_from(beta: f64) -> Result<Self> {
        Self::new(beta)
    }
}

impl From<EffectiveNumberParams> for f64 {
    fn from(params: EffectiveNumberParams) -> Self {
        params.beta
    }
}

/// Effective number of samples `(1 - beta^n) / (1 - beta)`.
///
/// Evaluated as `expm1(n * log1p(-eps)) / -eps` with `eps = 1 - beta`, which
/// keeps full precision as `beta` approaches 1 (the naive ratio cancels
/// catastrophically at `beta = 1 - 1e-9`). The result is clamped to the
/// analytic bounds `1 <= E <= min(n, 1 / eps)` for `n >= 1`.
pub fn effective_number(n: u64, params: EffectiveNumberParams) -> f64 {
    match n {
        0 => 0.0,
        1 => 1.0,
        _ => {
            let eps = 1.0 - params.beta;
            let n = n as f64;
            let e = libm::expm1(n * libm::log1p(-eps)) / -eps;
            e.clamp(1.0, n.min(1.0 / eps))
        }
    }
}

pub fn effective_numbers(stats: &ClassStats, params: EffectiveNumberParams) -> Vec<f64> {
    stats
        .counts
        .iter()
        .map(|&n| effective_number(n, params))
        .collect()
}

/// Returns `C` such that `max_j C / denominators[j] == max_margin`.
pub fn calibrate_c(max_margin: f64, denominators: &[f64]) -> Result<f64> {
    if !(max_margin.is_finite() && max_margin > 0.0) {
        return Err(Error::NonPositive {
            name: "max_margin",
            value: max_margin,
        });
    }
    if denominators.is_empty() {
        return Err(Error::Empty("denominators"));
    }
    let mut min = f64::INFINITY;
    for &d in denominators {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::NonPositive {
                name: "denominator",
                value: d,
            });
        }
        min = min.min(d);
    }
    Ok(max_margin * min)
}

/// How the margin constant `C` is obtained. The two forms are exclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MarginConstant {
    /// Use this `C` directly.
    C(f64),
    /// Pick `C` so that the largest margin equals this value.
    MaxMargin(f64),
}

impl MarginConstant {
    pub fn resolve(self, denominators: &[f64]) -> Result<f64> {
        match self {
            Self::C(c) => {
                check_c(c)?;
                Ok(c)
            }
            Self::MaxMargin(m) => calibrate_c(m, denominators),
        }
    }
}

impl Default for MarginConstant {
    fn default() -> Self {
        Self::MaxMargin(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "snake_case"))]
pub enum MarginMode {
    Ldam { c: f64 },
    #[cfg_attr(feature = "serde", serde(rename = "eldam"))]
    EffectiveLdam { c: f64, r: u32, beta: f64 },
    /// Explicit margins, e.g. all zeros to recover plain cross-entropy.
    Custom,
}

/// Per-class margins together with the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MarginSchedule {
    deltas: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(flatten))]
    mode: MarginMode,
}

impl MarginSchedule {
    /// An explicit schedule. Margins must be finite and nonnegative.
    pub fn custom(deltas: Vec<f64>) -> Result<Self> {
        if deltas.len() < 2 {
            return Err(Error::TooFewClasses(deltas.len()));
        }
        for &d in &deltas {
            if !d.is_finite() {
                return Err(Error::NonFinite("margins"));
            }
            if d < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "margin",
                    reason: "must be nonnegative",
                });
            }
        }
        Ok(Self {
            deltas,
            mode: MarginMode::Custom,
        })
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn mode(&self) -> MarginMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.deltas.len()
    }

    pub fn max_margin(&self) -> f64 {
        self.deltas.iter().copied().fold(0.0, f64::max)
    }
}

fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name: "C", value: c })
    }
}

/// `n_j^(1/4)` for every class.
pub fn ldam_denominators(stats: &ClassStats) -> Vec<f64> {
    stats
        .counts
        .iter()
        .map(|&n| libm::pow(n as f64, 0.25))
        .collect()
}

/// `E(n_j)^(1/r)` for every class.
pub fn eldam_denominators(stats: &ClassStats, params: EffectiveNumberParams, r: u32) -> Result<Vec<f64>> {
    if r < 1 {
        return Err(Error::InvalidExponent);
    }
    let root = 1.0 / f64::from(r);
    Ok(effective_numbers(stats, params)
        .into_iter()
        .map(|e| libm::pow(e, root))
        .collect())
}

/// LDAM margins `C / n_j^(1/4)`.
pub fn ldam_margins(stats: &ClassStats, c: f64) -> Result<MarginSchedule> {
    check_c(c)?;
    let deltas = ldam_denominators(stats).into_iter().map(|d| c / d).collect();
    Ok(MarginSchedule {
        deltas,
        mode: MarginMode::Ldam { c },
    })
}

/// E-LDAM margins `C / E(n_j)^(1/r)`.
pub fn eldam_margins(
    stats: &ClassStats,
    params: EffectiveNumberParams,
    r: u32,
    c: f64,
) -> Result<MarginSchedule> {
    check_c(c)?;
    let deltas = eldam_denominators(stats, params, r)?
        .into_iter()
        .map(|d| c / d)
        .collect();
    Ok(MarginSchedule {
        deltas,
        mode: MarginMode::EffectiveLdam {
            c,
            r,
            beta: params.beta(),
        },
    })
}

/// LDAM margins with `C` given directly or calibrated from a maximum margin.
pub fn ldam_schedule(stats: &ClassStats, constant: MarginConstant) -> Result<MarginSchedule> {
    let c = constant.resolve(&ldam_denominators(stats))?;
    ldam_margins(stats, c)
}

/// E-LDAM margins with `C` given directly or calibrated from a maximum margin.
pub fn eldam_schedule(
    stats: &ClassStats,
    params: EffectiveNumberParams,
    r: u32,
    constant: MarginConstant,
) -> Result<MarginSchedule> {
    let c = constant.resolve(&eldam_denominators(stats, params, r)?)?;
    eldam_margins(stats, params, r, c)
}
