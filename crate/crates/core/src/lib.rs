//! Imbalance-aware classification losses and the small amount of machinery
//! needed to compare them.
//!
//! The crate is `no_std` and only needs `alloc`. It provides:
//!
//! - [`margin`]: effective sample numbers and per-class margin schedules for
//!   LDAM and effective-number LDAM (E-LDAM).
//! - [`loss`]: cross-entropy, class-balanced cross-entropy and margin-softmax
//!   losses with exact gradients, plus a finite-difference checker.
//! - [`net`]: a deterministic feed-forward classifier trained with SGD.
//! - [`data`]: seeded synthetic long-tailed Gaussian datasets and splits.
//! - [`metrics`]: confusion matrices and the rates derived from them.
//!
//! File formats, configuration and the command-line harness live in the
//! companion `eldam` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod loss;
pub mod margin;
pub mod metrics;
pub mod net;

mod rng;

pub use data::{covidx_counts, covidx_test_counts, generate, stratified_split, Dataset, GaussianSpec};
pub use error::{Error, Result};
pub use loss::{
    batch_loss, cb_ce_loss, cb_weights, ce_loss, margin_loss, stable_softmax, BatchLoss,
    finite_diff_check, ClassWeights, GradCheck, GradCheckReport, LossFamily, LossResult, LossSpec,
};
pub use margin::{
    calibrate_c, effective_number, effective_numbers, eldam_margins, eldam_schedule, ldam_margins,
    ldam_schedule, ClassStats,
    EffectiveNumberParams, MarginConstant, MarginMode, MarginSchedule,
};
pub use metrics::{confusion, ConfusionMatrix, EvaluationReport};
pub use net::{train, Activation, EpochRecord, Gradients, Network, Sgd, TrainConfig, TrainHistory};
