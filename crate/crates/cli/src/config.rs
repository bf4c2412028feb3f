//! Experiment configuration (JSON).
//!
//! A config describes where the data comes from, the network shape, the
//! optimizer settings, the losses to compare and the seeds to run. Loss
//! parameters that depend on class counts (margins, class-balanced weights)
//! are resolved against the training partition at run time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use eldam_core::margin::{eldam_schedule, ldam_schedule};
use eldam_core::{
    cb_weights, Activation, ClassStats, EffectiveNumberParams, GaussianSpec, LossSpec, MarginConstant,
    MarginSchedule, TrainConfig,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Generate(GaussianSpec),
    Csv { path: PathBuf, k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layer widths; input and output sizes come from the data.
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default = "yes")]
    pub shuffle: bool,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "one")]
    pub lr_decay: f64,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_beta() -> f64 {
    EffectiveNumberParams::DEFAULT_BETA
}

fn default_r() -> u32 {
    4
}

/// One loss to compare. `c` and `max_margin` are mutually exclusive; when
/// neither is given the largest margin is calibrated to 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossConfig {
    Ce,
    CbCe {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    Ldam {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_margin: Option<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
    Eldam {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_r")]
        r: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_margin: Option<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Explicit per-class margins.
    Margin {
        deltas: Vec<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
}

pub fn margin_constant(c: Option<f64>, max_margin: Option<f64>) -> Result<MarginConstant> {
    match (c, max_margin) {
        (Some(_), Some(_)) => Err(Error::config("`c` and `max_margin` are mutually exclusive")),
        (Some(c), None) => Ok(MarginConstant::C(c)),
        (None, Some(m)) => Ok(MarginConstant::MaxMargin(m)),
        (None, None) => Ok(MarginConstant::MaxMargin(half())),
    }
}

fn beta(b: f64) -> Result<EffectiveNumberParams> {
    EffectiveNumberParams::new(b).map_err(|e| Error::config(e.to_string()))
}

impl LossConfig {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Ce => "CE",
            Self::CbCe { .. } => "CB-CE",
            Self::Ldam { .. } => "LDAM",
            Self::Eldam { .. } => "E-LDAM",
            Self::Margin { .. } => "MARGIN",
        }
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let scale = match self {
            Self::Ce => return Ok(()),
            Self::CbCe { beta: b } => {
                beta(*b)?;
                return Ok(());
            }
            Self::Ldam { c, max_margin, scale } => {
                margin_constant(*c, *max_margin)?;
                *scale
            }
            Self::Eldam { beta: b, r, c, max_margin, scale } => {
                beta(*b)?;
                if *r < 1 {
                    return Err(Error::config("`r` must be at least 1"));
                }
                margin_constant(*c, *max_margin)?;
                *scale
            }
            Self::Margin { deltas, scale } => {
                MarginSchedule::custom(deltas.clone()).map_err(|e| Error::config(e.to_string()))?;
                *scale
            }
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::config("`scale` must be positive"));
        }
        Ok(())
    }

    /// Builds the concrete loss for a training set with these class counts.
    pub fn resolve(&self, stats: &ClassStats) -> Result<LossSpec> {
        self.validate()?;
        Ok(match self {
            Self::Ce => LossSpec::CrossEntropy,
            Self::CbCe { beta: b } => LossSpec::ClassBalanced {
                weights: cb_weights(stats, beta(*b)?),
            },
            Self::Ldam { c, max_margin, scale } => {
                LossSpec::margin(ldam_schedule(stats, margin_constant(*c, *max_margin)?)?, *scale)?
            }
            Self::Eldam { beta: b, r, c, max_margin, scale } => LossSpec::margin(
                eldam_schedule(stats, beta(*b)?, *r, margin_constant(*c, *max_margin)?)?,
                *scale,
            )?,
            Self::Margin { deltas, scale } => {
                if deltas.len() != stats.k() {
                    return Err(Error::config(format!(
                        "margin list has {} entries for {} classes",
                        deltas.len(),
                        stats.k()
                    )));
                }
                LossSpec::margin(MarginSchedule::custom(deltas.clone())?, *scale)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Fraction of every class held out for evaluation.
    pub test_fraction: f64,
    /// Seed of the train/test split. When absent each run seed also
    /// seeds its own split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    pub model: ModelConfig,
    pub train: TrainSettings,
    pub losses: Vec<LossConfig>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

/// Scalar overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.learning_rate {
            self.train.learning_rate = v;
        }
        if let Some(v) = o.batch_size {
            self.train.batch_size = v;
        }
        if let Some(v) = &o.seeds {
            self.seeds = v.clone();
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.losses.is_empty() {
            return Err(Error::config("at least one loss is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("`test_fraction` must lie in (0, 1)"));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        for loss in &self.losses {
            loss.validate()?;
        }
        match &self.data {
            DataSource::Generate(spec) => spec.validate().map_err(|e| Error::config(e.to_string()))?,
            DataSource::Csv { k, .. } if *k < 2 => return Err(Error::config("`k` must be at least 2")),
            DataSource::Csv { .. } => {}
        }
        self.train_config(LossSpec::CrossEntropy, 0)
            .validate()
            .map_err(|e| Error::config(e.to_string()))
    }

    /// Checks that referenced files exist.
    pub fn check_files(&self) -> Result<()> {
        if let DataSource::Csv { path, .. } = &self.data {
            if !path.is_file() {
                return Err(Error::config(format!("data file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn train_config(&self, loss: LossSpec, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            seed,
            loss,
            shuffle: t.shuffle,
            weight_decay: t.weight_decay,
            lr_decay: t.lr_decay,
        }
    }

    pub fn split_seed_for(&self, run_seed: u64) -> u64 {
        self.split_seed.unwrap_or(run_seed)
    }
}

/// Named presets.
pub mod presets {
    use super::*;

    /// Three overlapping classes with counts 2000 / 400 / 60 in two
    /// dimensions, a 2-16-3 tanh network and ten seeds, comparing CE,
    /// CB-CE, LDAM and E-LDAM.
    pub fn standard() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Generate(standard_data()),
            test_fraction: 0.25,
            split_seed: None,
            model: ModelConfig {
                hidden: vec![16],
                activation: Activation::Tanh,
            },
            train: TrainSettings {
                epochs: 30,
                batch_size: 32,
                learning_rate: 0.05,
                momentum: 0.9,
                shuffle: true,
                weight_decay: 0.0,
                lr_decay: 1.0,
            },
            losses: vec![
                LossConfig::Ce,
                LossConfig::CbCe { beta: 0.999 },
                LossConfig::Ldam {
                    c: None,
                    max_margin: Some(STANDARD_MAX_MARGIN),
                    scale: 1.0,
                },
                LossConfig::Eldam {
                    beta: 0.999,
                    r: STANDARD_R,
                    c: None,
                    max_margin: Some(STANDARD_MAX_MARGIN),
                    scale: 1.0,
                },
            ],
            seeds: (1..=10).collect(),
            output_dir: PathBuf::from("runs/standard"),
        }
    }

    pub const STANDARD_MAX_MARGIN: f64 = 3.0;
    pub const STANDARD_R: u32 = 1;

    pub fn standard_data() -> GaussianSpec {
        GaussianSpec {
            counts: vec![2000, 400, 60],
            dims: 2,
            separation: 2.5,
            spread: 1.0,
            seed: 2024,
        }
    }

    pub fn by_name(name: &str) -> Option<ExperimentConfig> {
        match name {
            "standard" => Some(standard()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_round_trips_through_json() {
        let config = presets::standard();
        config.validate().unwrap();
        let back = ExperimentConfig::from_json(&config.to_json()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn margin_constant_exclusive() {
        assert!(margin_constant(Some(1.0), Some(0.5)).is_err());
        assert_eq!(margin_constant(None, None).unwrap(), MarginConstant::MaxMargin(0.5));
        let text = r#"{"kind":"ldam","c":1.0,"max_margin":0.5}"#;
        let loss: LossConfig = serde_json::from_str(text).unwrap();
        assert!(loss.validate().is_err());
    }

    #[test]
    fn loss_defaults() {
        let loss: LossConfig = serde_json::from_str(r#"{"kind":"eldam"}"#).unwrap();
        assert_eq!(
            loss,
            LossConfig::Eldam { beta: 0.999, r: 4, c: None, max_margin: None, scale: 1.0 }
        );
        let stats = ClassStats::new(vec![2000, 400, 60]).unwrap();
        let spec = loss.resolve(&stats).unwrap();
        assert_eq!(spec.name(), "E-LDAM");
        match spec {
            LossSpec::Margin { margins, .. } => assert!((margins.max_margin() - 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = presets::standard();
        c.losses.clear();
        assert!(c.validate().is_err());
        let mut c = presets::standard();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = presets::standard();
        c.test_fraction = 1.0;
        assert!(c.validate().is_err());
        let mut c = presets::standard();
        c.losses.push(LossConfig::CbCe { beta: 1.0 });
        assert!(c.validate().is_err());
        let mut c = presets::standard();
        c.train.momentum = 1.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_json("{").is_err());
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn margin_list_must_match_classes() {
        let loss = LossConfig::Margin { deltas: vec![0.0, 0.0], scale: 1.0 };
        let stats = ClassStats::new(vec![5, 5, 5]).unwrap();
        assert!(loss.resolve(&stats).is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut c = presets::standard();
        c.apply(&Overrides { epochs: Some(0), seeds: Some(vec![7]), ..Overrides::default() })
            .unwrap();
        assert_eq!(c.train.epochs, 0);
        assert_eq!(c.seeds, vec![7]);
        assert!(c.apply(&Overrides { seeds: Some(vec![]), ..Overrides::default() }).is_err());
    }
}
