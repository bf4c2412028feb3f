use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use eldam::config::{margin_constant, presets, ExperimentConfig, Overrides};
use eldam::csv_io::save_csv;
use eldam::experiment::{load_data, resolve_loss, run_cell, split, CellResult};
use eldam::model_io::{load_model, save_model};
use eldam::{compare, Error, Result};
use eldam_core::loss::{GradCheck, LossFamily};
use eldam_core::margin::{eldam_denominators, eldam_schedule, ldam_denominators, ldam_schedule};
use eldam_core::{effective_numbers, generate, ClassStats, EffectiveNumberParams, EvaluationReport, GaussianSpec};

#[derive(Parser)]
#[command(name = "eldam", version, about = "Imbalance-aware losses: margin tables, training and loss comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-class effective numbers and margins.
    Margins(MarginsArgs),
    /// Generate a synthetic imbalanced dataset as CSV.
    GenData(GenDataArgs),
    /// Train one (loss, seed) cell; writes a model file and a history report.
    Train(TrainArgs),
    /// Evaluate a saved model on the held-out split.
    Eval(EvalArgs),
    /// Train and evaluate every loss for every seed and summarize.
    Compare(CompareArgs),
    /// Check analytic loss gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MarginMode {
    Ldam,
    Eldam,
}

#[derive(Args)]
struct MarginsArgs {
    /// Per-class sample counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    counts: Vec<u64>,
    #[arg(long, value_enum, default_value = "eldam")]
    mode: MarginMode,
    #[arg(long, default_value_t = EffectiveNumberParams::DEFAULT_BETA)]
    beta: f64,
    /// Root applied to the effective number (E-LDAM only).
    #[arg(long, default_value_t = 4)]
    r: u32,
    /// Margin constant C.
    #[arg(long, conflicts_with = "max_margin")]
    c: Option<f64>,
    /// Calibrate C so the largest margin equals this value (default 0.5).
    #[arg(long)]
    max_margin: Option<f64>,
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenDataArgs {
    /// Start from a named preset ("standard"); explicit flags override it.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_delimiter = ',', required_unless_present = "preset")]
    counts: Option<Vec<u64>>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset instead of a config file ("standard").
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Comma separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Which configured loss to train.
    #[arg(long, default_value_t = 0)]
    loss_index: usize,
    /// Run seed; defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    loss_index: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; defaults to a file in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradLoss {
    Ce,
    CbCe,
    Margin,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_enum)]
    loss: GradLoss,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Margins(a) => cmd_margins(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn config_error(e: eldam_core::Error) -> Error {
    Error::config(e.to_string())
}

#[derive(Serialize)]
struct MarginRow {
    class: usize,
    count: u64,
    effective_number: f64,
    denominator: f64,
    margin: f64,
}

#[derive(Serialize)]
struct MarginTable {
    mode: &'static str,
    beta: f64,
    r: Option<u32>,
    c: f64,
    rows: Vec<MarginRow>,
}

fn cmd_margins(a: MarginsArgs) -> Result<ExitCode> {
    let stats = ClassStats::new(a.counts).map_err(config_error)?;
    let params = EffectiveNumberParams::new(a.beta).map_err(config_error)?;
    let constant = margin_constant(a.c, a.max_margin)?;
    let (schedule, denominators, mode, r) = match a.mode {
        MarginMode::Ldam => (
            ldam_schedule(&stats, constant).map_err(config_error)?,
            ldam_denominators(&stats),
            "LDAM",
            None,
        ),
        MarginMode::Eldam => (
            eldam_schedule(&stats, params, a.r, constant).map_err(config_error)?,
            eldam_denominators(&stats, params, a.r).map_err(config_error)?,
            "E-LDAM",
            Some(a.r),
        ),
    };
    let c = constant.resolve(&denominators).map_err(config_error)?;
    let effective = effective_numbers(&stats, params);
    let rows: Vec<MarginRow> = (0..stats.k())
        .map(|j| MarginRow {
            class: j,
            count: stats.counts()[j],
            effective_number: effective[j],
            denominator: denominators[j],
            margin: schedule.deltas()[j],
        })
        .collect();
    let table = MarginTable { mode, beta: a.beta, r, c, rows };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&table)?);
    } else {
        match r {
            Some(r) => println!("mode {mode}  beta {}  r {r}  C {c:.6}", a.beta),
            None => println!("mode {mode}  beta {}  C {c:.6}", a.beta),
        }
        println!("{:>5} {:>10} {:>16} {:>10}", "class", "count", "effective_n", "margin");
        for row in &table.rows {
            println!(
                "{:>5} {:>10} {:>16.4} {:>10.4}",
                row.class, row.count, row.effective_number, row.margin
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_data(a: GenDataArgs) -> Result<ExitCode> {
    let mut spec = match a.preset.as_deref() {
        Some("standard") => presets::standard_data(),
        Some(other) => return Err(Error::config(format!("unknown preset {other:?}"))),
        None => GaussianSpec {
            counts: Vec::new(),
            dims: 2,
            separation: 2.0,
            spread: 1.0,
            seed: 0,
        },
    };
    if let Some(v) = a.counts {
        spec.counts = v;
    }
    if let Some(v) = a.dims {
        spec.dims = v;
    }
    if let Some(v) = a.separation {
        spec.separation = v;
    }
    if let Some(v) = a.spread {
        spec.spread = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    spec.validate().map_err(config_error)?;
    let data = generate(&spec)?;
    save_csv(&data, &a.out)?;
    eprintln!("wrote {} rows to {}", data.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn load_config(a: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut config = match (&a.config, &a.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => {
            presets::by_name(name).ok_or_else(|| Error::config(format!("unknown preset {name:?}")))?
        }
        (None, None) => return Err(Error::config("need --config or --preset")),
    };
    config.apply(&Overrides {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        seeds: a.seeds.clone(),
        output_dir: a.output_dir.clone(),
    })?;
    config.check_files()?;
    Ok(config)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cell_stem(config: &ExperimentConfig, loss_index: usize, seed: u64) -> String {
    let label = config.losses[loss_index].label().to_lowercase();
    format!("{loss_index}-{label}-seed{seed}")
}

fn pick_seed(config: &ExperimentConfig, seed: Option<u64>) -> u64 {
    seed.unwrap_or(config.seeds[0])
}

fn check_loss_index(config: &ExperimentConfig, loss_index: usize) -> Result<()> {
    if loss_index >= config.losses.len() {
        return Err(Error::config(format!(
            "--loss-index {loss_index} out of range ({} losses configured)",
            config.losses.len()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    config: &'a ExperimentConfig,
    model: PathBuf,
    #[serde(flatten)]
    cell: &'a CellResult,
}

fn cmd_train(a: TrainArgs) -> Result<ExitCode> {
    let config = load_config(&a.config)?;
    check_loss_index(&config, a.loss_index)?;
    let seed = pick_seed(&config, a.seed);
    let data = load_data(&config)?;
    let (net, cell) = run_cell(&config, &data, a.loss_index, seed)?;

    create_dir(&config.output_dir)?;
    let stem = cell_stem(&config, a.loss_index, seed);
    let model_path = config.output_dir.join(format!("model-{stem}.txt"));
    let comments = [
        format!("loss {} (index {})", cell.label, a.loss_index),
        format!("seed {seed}"),
    ];
    save_model(&net, &comments, &model_path)?;
    let record = TrainRecord { config: &config, model: model_path.clone(), cell: &cell };
    let history_path = config.output_dir.join(format!("history-{stem}.json"));
    write_json(&record, &history_path)?;

    println!(
        "{} seed {seed}: train accuracy {}%, test accuracy {}%",
        cell.label,
        eldam_core::metrics::percent(cell.train_accuracy),
        cell.report.percent.accuracy
    );
    println!("model   {}", model_path.display());
    println!("history {}", history_path.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    config: &'a ExperimentConfig,
    model: &'a Path,
    loss_index: usize,
    #[serde(flatten)]
    report: &'a EvaluationReport,
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    let config = load_config(&a.config)?;
    check_loss_index(&config, a.loss_index)?;
    let seed = pick_seed(&config, a.seed);
    let net = load_model(&a.model)?;
    let data = load_data(&config)?;
    let parts = split(&config, &data, seed)?;
    let loss = resolve_loss(&config, &parts.train, a.loss_index)?;
    let report = EvaluationReport::new(net.confusion(&parts.test)?, loss, seed)?;

    let out = match a.out {
        Some(p) => p,
        None => {
            create_dir(&config.output_dir)?;
            let stem = cell_stem(&config, a.loss_index, seed);
            config.output_dir.join(format!("report-{stem}.json"))
        }
    };
    let record = EvalRecord { config: &config, model: &a.model, loss_index: a.loss_index, report: &report };
    write_json(&record, &out)?;
    println!(
        "accuracy {}%  recall {:?}  macro-F1 {}%",
        report.percent.accuracy, report.percent.recall, report.percent.macro_f1
    );
    println!("report {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(a: CompareArgs) -> Result<ExitCode> {
    let config = load_config(&a.config)?;
    if config.losses.len() < 2 {
        return Err(Error::config("compare needs at least two losses"));
    }
    let threads = a
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let summary = compare(&config, threads)?;
    create_dir(&config.output_dir)?;
    write_json(&summary, &config.output_dir.join("summary.json"))?;
    let table = summary.table();
    fs::write(config.output_dir.join("summary.txt"), &table)
        .map_err(|e| Error::io(config.output_dir.join("summary.txt"), e))?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let family = match a.loss {
        GradLoss::Ce => LossFamily::CrossEntropy,
        GradLoss::CbCe => LossFamily::ClassBalanced,
        GradLoss::Margin => LossFamily::Margin,
    };
    let check = GradCheck { trials: a.trials, step: a.step, tol: a.tol, seed: a.seed };
    let report = check.run_family(family).map_err(config_error)?;
    println!(
        "{family:?}: {} trials, max relative error {:.3e} (tol {:e}) -> {}",
        report.trials,
        report.max_rel_error,
        report.tol,
        if report.passed { "PASS" } else { "FAIL" }
    );
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
