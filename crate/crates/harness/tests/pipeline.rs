use lmmp_harness::config::{AlgorithmConfig, BudgetRule, ExperimentConfig};
use lmmp_harness::output::write_outputs;
use lmmp_harness::presets;
use lmmp_harness::runner::run_experiment;
use std::collections::HashMap;
use std::path::Path;

fn small_fig2(out: &Path) -> ExperimentConfig {
    let mut cfg = presets::fig2(BudgetRule::SqrtDT);
    cfg.scenario.d = vec![4];
    cfg.scenario.arms = 5;
    cfg.scenario.resources = 3;
    cfg.scenario.horizon = 60;
    cfg.repeats = 3;
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn run_to(cfg: &ExperimentConfig, threads: Option<usize>) {
    let out = run_experiment(cfg, threads).unwrap();
    write_outputs(&cfg.out_dir, &out, cfg.write_rounds, cfg.diagnostics).unwrap();
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn rounds_csv_counts_runs_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_fig2(dir.path());
    cfg.algorithms.truncate(1);
    cfg.repeats = 2;
    cfg.scenario.horizon = 10;
    run_to(&cfg, Some(1));
    let text = String::from_utf8(read(dir.path(), "rounds.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() - 1 <= 20);
    let mut runs: HashMap<&str, usize> = HashMap::new();
    for l in &lines[1..] {
        *runs.entry(l.split(',').next().unwrap()).or_default() += 1;
    }
    assert_eq!(runs.len(), 2);
    assert!(runs.values().all(|&n| n <= 10));
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_to(&small_fig2(a.path()), Some(1));
    run_to(&small_fig2(b.path()), Some(1));
    for f in ["rounds.csv", "summary.csv", "fits.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
}

#[test]
fn parallel_matches_serial() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_to(&small_fig2(a.path()), Some(1));
    run_to(&small_fig2(b.path()), Some(4));
    for f in ["rounds.csv", "summary.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
}

#[test]
fn different_master_seed_changes_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = small_fig2(b.path());
    cfg.master_seed += 1;
    run_to(&small_fig2(a.path()), Some(1));
    run_to(&cfg, Some(1));
    assert_ne!(read(a.path(), "rounds.csv"), read(b.path(), "rounds.csv"));
}

#[test]
fn summary_regret_is_last_cumulative_regret() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_fig2(dir.path());
    run_to(&cfg, None);
    let mut rounds = csv::Reader::from_path(dir.path().join("rounds.csv")).unwrap();
    let h = rounds.headers().unwrap().clone();
    let (id, cum, inst) = (
        h.iter().position(|c| c == "run_id").unwrap(),
        h.iter().position(|c| c == "regret_cum").unwrap(),
        h.iter().position(|c| c == "regret_inst").unwrap(),
    );
    let mut last: HashMap<String, (f64, f64)> = HashMap::new();
    for rec in rounds.records() {
        let rec = rec.unwrap();
        let e = last.entry(rec[id].to_string()).or_insert((0.0, 0.0));
        e.1 += rec[inst].parse::<f64>().unwrap();
        e.0 = rec[cum].parse().unwrap();
        assert!((e.0 - e.1).abs() < 1e-9 * e.1.abs().max(1.0));
    }
    let mut summary = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let h = summary.headers().unwrap().clone();
    let (sid, fr) = (
        h.iter().position(|c| c == "run_id").unwrap(),
        h.iter().position(|c| c == "final_regret").unwrap(),
    );
    let mut n = 0;
    for rec in summary.records() {
        let rec = rec.unwrap();
        assert_eq!(rec[fr].parse::<f64>().unwrap(), last[&rec[sid]].0);
        n += 1;
    }
    assert_eq!(n, last.len());
}

#[test]
fn dimension_sweep_emits_one_slope_per_group() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = presets::fig1();
    cfg.scenario = small_fig2(dir.path()).scenario;
    cfg.scenario.d = vec![2, 4];
    cfg.repeats = 2;
    cfg.out_dir = dir.path().to_path_buf();
    run_to(&cfg, None);
    assert!(!dir.path().join("rounds.csv").exists());
    let fits = std::fs::read_to_string(dir.path().join("fits.csv")).unwrap();
    let rows: Vec<&str> = fits.lines().collect();
    assert_eq!(rows.len(), 2);
    let slope: f64 = rows[1].split(',').nth(7).unwrap().parse().unwrap();
    assert!(slope.is_finite());
}

#[test]
fn grid_expands_every_combination() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = presets::fig3();
    cfg.scenario.horizon = 20;
    cfg.repeats = 1;
    cfg.out_dir = dir.path().to_path_buf();
    let out = run_experiment(&cfg, None).unwrap();
    assert_eq!(out.runs.len(), 27);
    let mut keys: Vec<String> = out.runs.iter().map(|r| r.hyper.key()).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 27);
    assert!(matches!(cfg.algorithms[0], AlgorithmConfig::Amf { .. }));
}

#[test]
fn diagnostics_file_is_optional() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_fig2(dir.path());
    cfg.algorithms.truncate(1);
    cfg.diagnostics = true;
    run_to(&cfg, None);
    let text = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert!(text.starts_with("run_id,t,lambda_min_1,theta_error"));
    assert!(text.lines().count() > 1);
}
