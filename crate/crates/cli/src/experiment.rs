//! Training runs and the multi-seed loss comparison.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use eldam_core::metrics::percent;
use eldam_core::{
    generate, stratified_split, train, ClassStats, Dataset, EvaluationReport, LossSpec, Network,
    TrainHistory,
};

use crate::config::{DataSource, ExperimentConfig};
use crate::csv_io::load_csv;
use crate::error::{Error, Result};

/// Loads or generates the full dataset named by the config.
pub fn load_data(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.data {
        DataSource::Generate(spec) => Ok(generate(spec)?),
        DataSource::Csv { path, k } => load_csv(path, *k),
    }
}

/// Train/test partitions for one run seed.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn split(config: &ExperimentConfig, data: &Dataset, run_seed: u64) -> Result<Split> {
    let (train, test) = stratified_split(data, config.test_fraction, config.split_seed_for(run_seed))?;
    Ok(Split { train, test })
}

pub fn network_dims(config: &ExperimentConfig, data: &Dataset) -> Vec<usize> {
    std::iter::once(data.dims())
        .chain(config.model.hidden.iter().copied())
        .chain(std::iter::once(data.k()))
        .collect()
}

/// Resolves loss `loss_index` against the training partition.
pub fn resolve_loss(config: &ExperimentConfig, train_set: &Dataset, loss_index: usize) -> Result<LossSpec> {
    let loss = config
        .losses
        .get(loss_index)
        .ok_or_else(|| Error::config(format!("loss index {loss_index} out of range")))?;
    let stats = train_set.class_stats()?;
    loss.resolve(&stats)
}

/// Outcome of training one loss with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub loss_index: usize,
    pub label: String,
    pub seed: u64,
    pub train_counts: Vec<u64>,
    /// Accuracy on the training partition after the last epoch.
    pub train_accuracy: f64,
    /// Evaluation on the held-out partition.
    pub report: EvaluationReport,
    pub history: TrainHistory,
}

impl CellResult {
    pub fn name(&self) -> String {
        format!("{}#{}/seed {}", self.label, self.loss_index, self.seed)
    }
}

/// Trains loss `loss_index` with `seed` and evaluates on the held-out split.
/// The seed drives initialization, shuffling and (unless the config pins
/// `split_seed`) the split itself.
pub fn run_cell(
    config: &ExperimentConfig,
    data: &Dataset,
    loss_index: usize,
    seed: u64,
) -> Result<(Network, CellResult)> {
    let Split { train: train_set, test } = split(config, data, seed)?;
    let loss = resolve_loss(config, &train_set, loss_index)?;
    let net = Network::init(&network_dims(config, data), config.model.activation, seed)?;
    let train_config = config.train_config(loss.clone(), seed);
    let (net, history) = train(net, &train_set, Some(&test), &train_config)?;
    let train_accuracy = net.confusion(&train_set)?.accuracy()?;
    let report = EvaluationReport::new(net.confusion(&test)?, loss, seed)?;
    let cell = CellResult {
        loss_index,
        label: config.losses[loss_index].label().to_string(),
        seed,
        train_counts: train_set.class_counts(),
        train_accuracy,
        report,
        history,
    };
    Ok((net, cell))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for one value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Clamp away rounding so the mean always lies within [min, max].
        Self { mean: mean.clamp(min, max), std: var.sqrt(), min, max }
    }

    fn pct(&self) -> String {
        format!("{} ± {}", percent(self.mean), percent(self.std))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossAggregate {
    pub loss_index: usize,
    pub label: String,
    pub accuracy: Stat,
    pub recall: Vec<Stat>,
    pub minority_recall: Stat,
    pub macro_f1: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub config: ExperimentConfig,
    pub class_counts: Vec<u64>,
    pub minority_class: usize,
    /// Ordered by (loss index, seed index).
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<LossAggregate>,
}

impl ComparisonSummary {
    pub fn aggregate(&self, label: &str) -> Option<&LossAggregate> {
        self.aggregates.iter().find(|a| a.label == label)
    }

    /// Human-readable table: one row per loss with accuracy and minority
    /// recall (mean ± std over seeds, in percent), then per-class recalls.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let k = self.class_counts.len();
        let _ = writeln!(
            out,
            "class counts {:?}, minority class {}, {} seed(s)",
            self.class_counts,
            self.minority_class,
            self.config.seeds.len()
        );
        let _ = write!(out, "{:<10} {:>18} {:>18}", "loss", "accuracy %", "minority recall %");
        for c in 0..k {
            let _ = write!(out, " {:>18}", format!("recall[{c}] %"));
        }
        out.push('\n');
        for a in &self.aggregates {
            let _ = write!(out, "{:<10} {:>18} {:>18}", a.label, a.accuracy.pct(), a.minority_recall.pct());
            for r in &a.recall {
                let _ = write!(out, " {:>18}", r.pct());
            }
            out.push('\n');
        }
        out
    }
}

fn aggregate(config: &ExperimentConfig, cells: &[CellResult], minority: usize, k: usize) -> Vec<LossAggregate> {
    config
        .losses
        .iter()
        .enumerate()
        .map(|(i, loss)| {
            let mine: Vec<&CellResult> = cells.iter().filter(|c| c.loss_index == i).collect();
            let col = |f: &dyn Fn(&CellResult) -> f64| Stat::of(&mine.iter().map(|c| f(c)).collect::<Vec<_>>());
            LossAggregate {
                loss_index: i,
                label: loss.label().to_string(),
                accuracy: col(&|c| c.report.accuracy),
                recall: (0..k).map(|j| col(&|c| c.report.per_class_recall[j])).collect(),
                minority_recall: col(&|c| c.report.per_class_recall[minority]),
                macro_f1: col(&|c| c.report.macro_f1),
            }
        })
        .collect()
}

/// Trains every (loss, seed) cell, using up to `threads` worker threads.
///
/// Each cell is single-threaded and independent, and results are ordered by
/// (loss index, seed index), so the summary does not depend on `threads`.
pub fn compare(config: &ExperimentConfig, threads: usize) -> Result<ComparisonSummary> {
    config.validate()?;
    config.check_files()?;
    let data = load_data(config)?;
    let stats = ClassStats::new(data.class_counts())?;

    let jobs: Vec<(usize, u64)> = (0..config.losses.len())
        .flat_map(|l| config.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let results: Mutex<Vec<Option<Result<CellResult>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, jobs.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(loss_index, seed)) = jobs.get(i) else { break };
                let outcome = run_cell(config, &data, loss_index, seed).map(|(_, cell)| cell);
                let failed = outcome.is_err();
                results.lock().expect("no poisoned workers")[i] = Some(outcome);
                if failed {
                    // Stop handing out new cells after the first failure.
                    next.store(jobs.len(), Ordering::Relaxed);
                }
            });
        }
    });

    let mut cells = Vec::with_capacity(jobs.len());
    let mut failure = None;
    for outcome in results.into_inner().expect("no poisoned workers").into_iter().flatten() {
        match outcome {
            Ok(cell) => cells.push(cell),
            Err(e) if failure.is_none() => failure = Some(e),
            Err(_) => {}
        }
    }
    if let Some(source) = failure {
        return Err(Error::Partial {
            completed: cells.iter().map(CellResult::name).collect(),
            source: Box::new(source),
        });
    }

    let minority = stats.minority_class();
    Ok(ComparisonSummary {
        aggregates: aggregate(config, &cells, minority, stats.k()),
        config: config.clone(),
        class_counts: stats.counts().to_vec(),
        minority_class: minority,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{presets, LossConfig};

    fn small() -> ExperimentConfig {
        let mut c = presets::standard();
        if let DataSource::Generate(spec) = &mut c.data {
            spec.counts = vec![120, 40, 12];
        }
        c.train.epochs = 3;
        c.seeds = vec![1, 2];
        c
    }

    #[test]
    fn stat_basics() {
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!((s.min, s.max), (1.0, 3.0));
        assert_eq!(Stat::of(&[0.25]).std, 0.0);
    }

    #[test]
    fn summary_shape_and_thread_independence() {
        let config = small();
        let a = compare(&config, 1).unwrap();
        let b = compare(&config, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), config.losses.len() * config.seeds.len());
        assert_eq!(a.minority_class, 2);
        for agg in &a.aggregates {
            assert!(agg.accuracy.min <= agg.accuracy.mean && agg.accuracy.mean <= agg.accuracy.max);
        }
        let table = a.table();
        assert_eq!(table.lines().count(), 2 + config.losses.len());
        assert!(table.contains("E-LDAM"));
    }

    #[test]
    fn zero_margin_matches_ce() {
        let mut config = small();
        config.losses = vec![
            LossConfig::Ce,
            LossConfig::Margin { deltas: vec![0.0; 3], scale: 1.0 },
        ];
        let s = compare(&config, 2).unwrap();
        let (ce, zero) = s.cells.split_at(config.seeds.len());
        for (a, b) in ce.iter().zip(zero) {
            assert_eq!(a.report.confusion, b.report.confusion);
            assert_eq!(a.history, b.history);
        }
    }

    #[test]
    fn failures_report_completed_cells() {
        let mut config = small();
        // A two-entry margin list for three classes fails when resolved.
        config.losses = vec![LossConfig::Ce, LossConfig::Margin { deltas: vec![0.0; 2], scale: 1.0 }];
        match compare(&config, 1) {
            Err(Error::Partial { completed, .. }) => assert_eq!(completed.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
