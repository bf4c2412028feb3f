//! Acceptance suite. Every check prints one `PASS`/`FAIL` line to stdout
//! (bypassing the test harness capture) and then asserts.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use eldam_core::loss::{GradCheck, LossFamily};
use eldam_core::margin::{eldam_margins, eldam_schedule, ldam_schedule};
use eldam_core::{
    cb_ce_loss, cb_weights, ce_loss, margin_loss, ClassStats, ConfusionMatrix, EffectiveNumberParams,
    EvaluationReport, LossSpec, MarginConstant, MarginSchedule,
};

const COVIDX_TRAIN_COUNTS: [u64; 3] = [4649, 5964, 8751];

fn report(name: &str, pass: bool, detail: &str) {
    let line = format!("{} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn eldam(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eldam"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn eldam")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn gradient_suite() {
    let start = Instant::now();
    let mut worst = Vec::new();
    let mut pass = true;
    for family in [LossFamily::CrossEntropy, LossFamily::ClassBalanced, LossFamily::Margin] {
        let check = GradCheck { trials: 1000, tol: 1e-5, ..GradCheck::default() };
        let r = check.run_family(family).unwrap();
        assert_eq!(r.trials, 1000);
        pass &= r.passed && r.max_rel_error < 1e-5;
        worst.push(format!("{family:?} max rel {:.2e}", r.max_rel_error));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    report(
        "gradient suite",
        pass,
        &format!("3 x 1000 trials at tol 1e-5 in {:.2}s; {}", elapsed.as_secs_f64(), worst.join(", ")),
    );
    assert!(pass);
}

#[test]
fn equivalence_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    // Zero margins at unit scale reduce to cross-entropy.
    let mut zero_margin_err: f64 = 0.0;
    for _ in 0..10_000 {
        let k = rng.random_range(2..=10);
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y = rng.random_range(0..k);
        let zero = MarginSchedule::custom(vec![0.0; k]).unwrap();
        let m = margin_loss(&z, y, &zero, 1.0).unwrap();
        let c = ce_loss(&z, y).unwrap();
        zero_margin_err = zero_margin_err.max((m.loss - c.loss).abs()).max(max_abs_diff(&m.grad, &c.grad));
    }
    let zero_ok = zero_margin_err <= 1e-12;

    // beta = 0 makes every effective number 1, so every margin is C.
    let mut beta0_ok = true;
    for _ in 0..1000 {
        let k = rng.random_range(2..=10);
        let counts: Vec<u64> = (0..k).map(|_| rng.random_range(1..=100_000)).collect();
        let r = rng.random_range(1..=8);
        let c = rng.random_range(0.01..5.0);
        let stats = ClassStats::new(counts).unwrap();
        let m = eldam_margins(&stats, EffectiveNumberParams::new(0.0).unwrap(), r, c).unwrap();
        beta0_ok &= m.deltas().iter().all(|&d| d == c);
    }

    // Equal counts give unit class-balanced weights.
    let mut cb_err: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(2..=10);
        let n = rng.random_range(1..=10_000);
        let beta = rng.random_range(0.0..0.9999);
        let w = cb_weights(&ClassStats::new(vec![n; k]).unwrap(), EffectiveNumberParams::new(beta).unwrap());
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y = rng.random_range(0..k);
        let a = cb_ce_loss(&z, y, &w).unwrap();
        let b = ce_loss(&z, y).unwrap();
        cb_err = cb_err.max((a.loss - b.loss).abs()).max(max_abs_diff(&a.grad, &b.grad));
    }
    let cb_ok = cb_err <= 1e-12;

    let pass = zero_ok && beta0_ok && cb_ok;
    report(
        "equivalence suite",
        pass,
        &format!(
            "zero-margin vs CE max err {zero_margin_err:.1e} over 10^4 cases; beta=0 margins == C: {beta0_ok}; \
             equal-count CB-CE vs CE max err {cb_err:.1e}"
        ),
    );
    assert!(pass);
}

#[test]
fn limit_suite() {
    let stats = ClassStats::new(COVIDX_TRAIN_COUNTS.to_vec()).unwrap();
    let half = MarginConstant::MaxMargin(0.5);
    let near_one = EffectiveNumberParams::new(1.0 - 1e-9).unwrap();
    let e = eldam_schedule(&stats, near_one, 4, half).unwrap();
    let l = ldam_schedule(&stats, half).unwrap();
    let diff = max_abs_diff(e.deltas(), l.deltas());

    // Same check with a fixed C and counts up to 10^4.
    let raw = ClassStats::new(vec![1, 7, 60, 512, 3000, 10_000]).unwrap();
    let c = 1.0;
    let e_raw = eldam_margins(&raw, near_one, 4, c).unwrap();
    let l_raw = eldam_core::margin::ldam_margins(&raw, c).unwrap();
    let diff_raw = max_abs_diff(e_raw.deltas(), l_raw.deltas());

    let pass = diff < 1e-3 && diff_raw < 1e-3;
    report(
        "limit suite",
        pass,
        &format!("beta = 1-1e-9, r = 4: max |E-LDAM - LDAM| = {diff:.2e} (calibrated), {diff_raw:.2e} (C = 1)"),
    );
    assert!(pass);
}

#[test]
fn margin_table_regression() {
    let dir = tempfile::tempdir().unwrap();
    let margins = |extra: &[&str]| -> Vec<f64> {
        let mut args = vec!["margins", "--counts", "4649,5964,8751", "--max-margin", "0.5", "--json"];
        args.extend_from_slice(extra);
        let out = eldam(&args, dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        v["rows"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["margin"].as_f64().unwrap())
            .collect()
    };
    // Independent high-precision evaluations of n^(-1/4) and E_n^(-1/4).
    let ldam_oracle = [0.5, 0.4698134893960955, 0.4268698386368402];
    let eldam_oracle = [0.5, 0.4769096608107687, 0.4467846393297164];
    let ldam = margins(&["--mode", "ldam"]);
    let eldam_m = margins(&["--mode", "eldam", "--beta", "0.9999", "--r", "4"]);
    let d1 = max_abs_diff(&ldam, &ldam_oracle);
    let d2 = max_abs_diff(&eldam_m, &eldam_oracle);
    let d3 = max_abs_diff(&ldam, &[0.5, 0.4698, 0.4269]).max(max_abs_diff(&eldam_m, &[0.5, 0.4769, 0.4468]));
    let pass = d1 < 5e-4 && d2 < 5e-4 && d3 < 5e-4;
    report(
        "margin-table regression",
        pass,
        &format!("LDAM {ldam:.4?} (err {d1:.1e}), E-LDAM {eldam_m:.4?} (err {d2:.1e}), vs 4-digit table {d3:.1e}"),
    );
    assert!(pass);
}

#[test]
fn trend_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = eldam(&["compare", "--preset", "standard", "--output-dir", "out"], dir.path());
    let elapsed = start.elapsed();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["class_counts"], serde_json::json!([2000, 400, 60]));
    assert_eq!(summary["config"]["seeds"].as_array().unwrap().len(), 10);
    let stat = |label: &str, field: &str| -> f64 {
        let a = summary["aggregates"]
            .as_array()
            .unwrap()
            .iter()
            .find(|a| a["label"] == label)
            .unwrap_or_else(|| panic!("no {label} aggregate"));
        a[field]["mean"].as_f64().unwrap() * 100.0
    };
    let (ce_min, ldam_min, el_min) =
        (stat("CE", "minority_recall"), stat("LDAM", "minority_recall"), stat("E-LDAM", "minority_recall"));
    let (ce_acc, el_acc) = (stat("CE", "accuracy"), stat("E-LDAM", "accuracy"));

    let gain = el_min - ce_min;
    let pass = el_min > ce_min
        && gain >= 3.0
        && ldam_min >= ce_min
        && (el_acc - ce_acc).abs() <= 3.0
        && (80.0..=95.0).contains(&ce_acc)
        && elapsed < Duration::from_secs(300);
    report(
        "trend reproduction",
        pass,
        &format!(
            "minority recall CE {ce_min:.2} / LDAM {ldam_min:.2} / E-LDAM {el_min:.2} (E-LDAM - CE = {gain:+.2} pp); \
             accuracy CE {ce_acc:.2} / E-LDAM {el_acc:.2}; E-LDAM >= LDAM: {} (reported); {:.1}s",
            el_min >= ldam_min,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn metric_consistency() {
    // Test split of 274 / 105 / 100 with 268 + 100 + 91 = 459 correct.
    let m = ConfusionMatrix::from_rows(vec![vec![268, 4, 2], vec![3, 100, 2], vec![5, 4, 91]]).unwrap();
    let r = EvaluationReport::new(m, LossSpec::CrossEntropy, 0).unwrap();
    let recall = r.percent.recall[0].clone();
    let accuracy = r.percent.accuracy.clone();
    let pass = recall == "97.81"
        && accuracy == "95.82"
        && r.per_class_recall[0] == 268.0 / 274.0
        && r.accuracy == 459.0 / 479.0;
    report("metric consistency", pass, &format!("recall 268/274 -> {recall}%, accuracy 459/479 -> {accuracy}%"));
    assert!(pass);
}

#[test]
fn determinism() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let small = ["--preset", "standard", "--epochs", "2", "--seeds", "3,4", "--output-dir", "out"];
    let with = |head: &[&'static str], tail: &[&'static str]| -> Vec<&'static str> {
        let mut v = head.to_vec();
        v.extend_from_slice(&small);
        v.extend_from_slice(tail);
        v
    };
    let commands: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (vec!["margins", "--counts", "4649,5964,8751", "--json"], vec![]),
        (vec!["gen-data", "--preset", "standard", "--out", "data.csv"], vec!["data.csv"]),
        (
            with(&["train"], &["--loss-index", "3", "--seed", "3"]),
            vec!["out/model-3-e-ldam-seed3.txt", "out/history-3-e-ldam-seed3.json"],
        ),
        (
            with(&["eval"], &["--loss-index", "3", "--seed", "3", "--model", "out/model-3-e-ldam-seed3.txt"]),
            vec!["out/report-3-e-ldam-seed3.json"],
        ),
        (with(&["compare"], &["--threads", "2"]), vec!["out/summary.json", "out/summary.txt"]),
        (vec!["gradcheck", "--loss", "margin", "--trials", "200"], vec![]),
    ];

    let mut failures = Vec::new();
    let mut files = 0;
    for (args, outputs) in &commands {
        let first = eldam(args, p);
        assert!(first.status.success(), "{args:?}: {}", String::from_utf8_lossy(&first.stderr));
        let before: Vec<Vec<u8>> = outputs.iter().map(|f| std::fs::read(p.join(f)).unwrap()).collect();
        let second = eldam(args, p);
        let after: Vec<Vec<u8>> = outputs.iter().map(|f| std::fs::read(p.join(f)).unwrap()).collect();
        files += outputs.len();
        if first.stdout != second.stdout || first.status.code() != second.status.code() || before != after {
            failures.push(args[0]);
        }
    }
    let pass = failures.is_empty();
    report(
        "determinism",
        pass,
        &format!(
            "{} commands rerun, stdout and {files} output files byte-identical; mismatches: {failures:?}",
            commands.len()
        ),
    );
    assert!(pass);
}
