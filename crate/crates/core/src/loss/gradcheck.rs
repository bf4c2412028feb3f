//! Central-difference verification of the analytic loss gradients.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::{cb_weights, LossSpec};
use crate::error::{Error, Result};
use crate::margin::{
    eldam_schedule, ldam_schedule, ClassStats, EffectiveNumberParams, MarginConstant, MarginSchedule,
};
use crate::rng::{seeded, Stream};

/// Which loss family to draw random instances from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossFamily {
    CrossEntropy,
    ClassBalanced,
    Margin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub trials: usize,
    /// Finite-difference step `h`.
    pub step: f64,
    /// Relative tolerance; a check passes when the worst error is strictly below it.
    pub tol: f64,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            trials: 1000,
            step: 1e-6,
            tol: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GradCheckReport {
    pub trials: usize,
    pub step: f64,
    pub tol: f64,
    pub seed: u64,
    pub max_rel_error: f64,
    /// Trial index that produced `max_rel_error`.
    pub worst_trial: usize,
    pub passed: bool,
}

/// `max_i |a_i - n_i| / max(|a|_inf, |n|_inf)`, or 0 when both are zero.
///
/// Normalizing by the vector norm rather than per component keeps entries
/// that are tiny relative to the rest of the gradient from dominating on
/// rounding noise alone.
pub fn gradient_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = inf(analytic).max(inf(numeric));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

impl GradCheck {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter {
                name: "trials",
                reason: "must be at least 1",
            });
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::NonPositive { name: "step", value: self.step });
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: "must be nonnegative",
            });
        }
        Ok(())
    }

    /// Checks `trials` random `(z, y)` draws against one fixed loss spec.
    pub fn run_spec(&self, spec: &LossSpec) -> Result<GradCheckReport> {
        self.validate()?;
        let mut rng = seeded(self.seed, Stream::GradCheck);
        let mut worst = (0.0, 0);
        for t in 0..self.trials {
            let k = spec.k().unwrap_or_else(|| rng.random_range(2..=10));
            let (z, y) = random_logits(&mut rng, k);
            let err = self.check_one(spec, &z, y)?;
            if err > worst.0 {
                worst = (err, t);
            }
        }
        Ok(self.report(worst))
    }

    /// Checks `trials` random instances of a loss family: every trial draws
    /// `k` in `2..=10`, logits in `[-5, 5]`, a label, and the family's
    /// parameters (class weights or a margin schedule and scale).
    pub fn run_family(&self, family: LossFamily) -> Result<GradCheckReport> {
        self.validate()?;
        let mut rng = seeded(self.seed, Stream::GradCheck);
        let mut worst = (0.0, 0);
        for t in 0..self.trials {
            let k = rng.random_range(2..=10);
            let spec = random_spec(&mut rng, family, k)?;
            let (z, y) = random_logits(&mut rng, k);
            let err = self.check_one(&spec, &z, y)?;
            if err > worst.0 {
                worst = (err, t);
            }
        }
        Ok(self.report(worst))
    }

    fn check_one(&self, spec: &LossSpec, z: &[f64], y: usize) -> Result<f64> {
        let analytic = spec.evaluate(z, y)?.grad;
        let mut numeric = Vec::with_capacity(z.len());
        let mut probe = z.to_vec();
        for i in 0..z.len() {
            probe[i] = z[i] + self.step;
            let plus = spec.evaluate(&probe, y)?.loss;
            probe[i] = z[i] - self.step;
            let minus = spec.evaluate(&probe, y)?.loss;
            probe[i] = z[i];
            numeric.push((plus - minus) / (2.0 * self.step));
        }
        Ok(gradient_relative_error(&analytic, &numeric))
    }

    fn report(&self, (max_rel_error, worst_trial): (f64, usize)) -> GradCheckReport {
        GradCheckReport {
            trials: self.trials,
            step: self.step,
            tol: self.tol,
            seed: self.seed,
            max_rel_error,
            worst_trial,
            passed: max_rel_error < self.tol,
        }
    }
}

/// Runs [`GradCheck::run_family`].
pub fn finite_diff_check(family: LossFamily, check: &GradCheck) -> Result<GradCheckReport> {
    check.run_family(family)
}

fn random_logits(rng: &mut ChaCha8Rng, k: usize) -> (Vec<f64>, usize) {
    let z = (0..k).map(|_| rng.random_range(-5.0..=5.0)).collect();
    (z, rng.random_range(0..k))
}

fn random_stats(rng: &mut ChaCha8Rng, k: usize) -> ClassStats {
    let counts = (0..k).map(|_| rng.random_range(1..=10_000u64)).collect();
    ClassStats::new(counts).expect("k >= 2 and counts >= 1")
}

fn random_spec(rng: &mut ChaCha8Rng, family: LossFamily, k: usize) -> Result<LossSpec> {
    Ok(match family {
        LossFamily::CrossEntropy => LossSpec::CrossEntropy,
        LossFamily::ClassBalanced => {
            let stats = random_stats(rng, k);
            let beta = EffectiveNumberParams::new(rng.random_range(0.0..0.9999))?;
            LossSpec::ClassBalanced { weights: cb_weights(&stats, beta) }
        }
        LossFamily::Margin => {
            let max_margin = MarginConstant::MaxMargin(rng.random_range(0.05..=1.0));
            let margins = match rng.random_range(0..3u8) {
                0 => ldam_schedule(&random_stats(rng, k), max_margin)?,
                1 => {
                    let stats = random_stats(rng, k);
                    let beta = EffectiveNumberParams::new(rng.random_range(0.0..0.99999))?;
                    let r = rng.random_range(1..=6);
                    eldam_schedule(&stats, beta, r, max_margin)?
                }
                _ => MarginSchedule::custom((0..k).map(|_| rng.random_range(0.0..1.0)).collect())?,
            };
            LossSpec::margin(margins, rng.random_range(0.5..=2.0))?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn every_family_passes() {
        for family in [LossFamily::CrossEntropy, LossFamily::ClassBalanced, LossFamily::Margin] {
            let r = finite_diff_check(family, &GradCheck::default()).unwrap();
            assert!(r.passed, "{family:?}: {r:?}");
            assert_eq!(r.trials, 1000);
        }
    }

    #[test]
    fn zero_tolerance_fails() {
        let check = GradCheck { tol: 0.0, trials: 20, ..GradCheck::default() };
        let r = check.run_family(LossFamily::CrossEntropy).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn fixed_spec() {
        let m = MarginSchedule::custom(vec![0.2, 0.9, 0.0]).unwrap();
        let spec = LossSpec::margin(m, 1.5).unwrap();
        assert!(GradCheck::default().run_spec(&spec).unwrap().passed);
        assert!(GradCheck::default().run_spec(&LossSpec::CrossEntropy).unwrap().passed);
    }

    #[test]
    fn deterministic_per_seed() {
        let check = GradCheck { trials: 50, seed: 9, ..GradCheck::default() };
        assert_eq!(
            check.run_family(LossFamily::Margin).unwrap(),
            check.run_family(LossFamily::Margin).unwrap()
        );
    }

    #[test]
    fn invalid_parameters() {
        let bad = [
            GradCheck { trials: 0, ..GradCheck::default() },
            GradCheck { step: 0.0, ..GradCheck::default() },
            GradCheck { tol: -1.0, ..GradCheck::default() },
        ];
        for check in bad {
            assert!(check.run_family(LossFamily::CrossEntropy).is_err());
        }
    }

    #[test]
    fn relative_error_definition() {
        assert_eq!(gradient_relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(gradient_relative_error(&[1.0, -1.0], &[1.0, -0.5]), 0.5);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let analytic = [0.5, -0.5];
        let numeric = [0.4, -0.4];
        assert!(gradient_relative_error(&analytic, &numeric) > 1e-5);
    }
}
