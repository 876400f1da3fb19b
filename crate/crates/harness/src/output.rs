//! CSV writers. Floats use Rust's shortest round-trip formatting so equal
//! runs give byte-identical files.

use crate::fit::{fit_groups, FitRow};
use crate::runner::{class_probs_name, opt_num, ExperimentOutput, RunResult};
use crate::HarnessError;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    let file = File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    }
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

pub fn write_rounds(path: &Path, out: &ExperimentOutput) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    let m = out.resources;
    let mut header: Vec<String> = ["run_id", "algo", "t", "class_j", "action", "reward"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(numbered("consumption", m));
    header.extend(numbered("slack", m));
    header.push("regret_inst".into());
    header.push("regret_cum".into());
    w.write_record(&header).map_err(&err)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for run in &out.runs {
        for r in &run.rounds {
            rec.clear();
            rec.push(run.run_id.to_string());
            rec.push(run.algo.clone());
            rec.push(r.t.to_string());
            rec.push(r.class_j.to_string());
            rec.push(r.action.to_string());
            rec.push(r.reward.to_string());
            rec.extend(r.consumption.iter().map(|v| v.to_string()));
            rec.extend(r.slack.iter().map(|v| v.to_string()));
            rec.push(r.regret_inst.to_string());
            rec.push(r.regret_cum.to_string());
            w.write_record(&rec).map_err(&err)?;
        }
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const SUMMARY_COLUMNS: [&str; 19] = [
    "run_id",
    "algo",
    "d",
    "repeat",
    "seed",
    "gamma_theta",
    "gamma_b",
    "delta",
    "class_probs",
    "alpha",
    "T",
    "B",
    "opt",
    "final_regret",
    "final_reward",
    "rounds_survived",
    "exhausted",
    "max_round_consumption",
    "total_consumption_max",
];

fn summary_record(run: &RunResult) -> Vec<String> {
    let h = &run.hyper;
    let mut rec = vec![
        run.run_id.to_string(),
        run.algo.clone(),
        run.d.to_string(),
        run.repeat.to_string(),
        run.seed.to_string(),
        opt_num(h.gamma_theta),
        opt_num(h.gamma_b),
        opt_num(h.delta),
        h.class_probs.map_or(String::new(), |c| class_probs_name(c).to_string()),
        opt_num(h.alpha),
        run.horizon.to_string(),
        run.budget.to_string(),
        run.opt.to_string(),
        run.final_regret.to_string(),
        run.final_reward.to_string(),
        run.rounds_survived.to_string(),
        run.exhausted.to_string(),
        run.max_round_consumption.to_string(),
        run.consumption.iter().copied().fold(f64::NEG_INFINITY, f64::max).to_string(),
    ];
    rec.extend(run.consumption.iter().map(|v| v.to_string()));
    rec
}

pub fn write_summary(path: &Path, out: &ExperimentOutput) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    let mut header: Vec<String> = SUMMARY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(numbered("consumption", out.resources));
    w.write_record(&header).map_err(&err)?;
    for run in &out.runs {
        w.write_record(summary_record(run)).map_err(&err)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_fits(path: &Path, fits: &[FitRow]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record([
        "algo",
        "gamma_theta",
        "gamma_b",
        "delta",
        "class_probs",
        "alpha",
        "n_points",
        "slope",
        "intercept",
    ])
    .map_err(&err)?;
    for f in fits {
        let h = &f.hyper;
        w.write_record([
            f.algo.clone(),
            opt_num(h.gamma_theta),
            opt_num(h.gamma_b),
            opt_num(h.delta),
            h.class_probs.map_or(String::new(), |c| class_probs_name(c).to_string()),
            opt_num(h.alpha),
            f.n_points.to_string(),
            f.slope.to_string(),
            f.intercept.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_diagnostics(path: &Path, out: &ExperimentOutput) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    let mut header = vec!["run_id".to_string(), "t".to_string()];
    header.extend(numbered("lambda_min", out.classes));
    header.push("theta_error".into());
    w.write_record(&header).map_err(&err)?;
    for run in &out.runs {
        for d in &run.diagnostics {
            let mut rec = vec![run.run_id.to_string(), d.t.to_string()];
            rec.extend(d.lambda_min.iter().map(|v| v.to_string()));
            rec.push(d.theta_error.to_string());
            w.write_record(&rec).map_err(&err)?;
        }
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `summary.csv`, `fits.csv`, and `rounds.csv` / `diagnostics.csv`
/// when enabled. Returns the paths written.
pub fn write_outputs(
    dir: &Path,
    out: &ExperimentOutput,
    write_rounds_csv: bool,
    diagnostics: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    if write_rounds_csv {
        let p = dir.join("rounds.csv");
        write_rounds(&p, out)?;
        written.push(p);
    }
    let p = dir.join("summary.csv");
    write_summary(&p, out)?;
    written.push(p);
    let p = dir.join("fits.csv");
    write_fits(&p, &fit_groups(&out.runs)?)?;
    written.push(p);
    if diagnostics {
        let p = dir.join("diagnostics.csv");
        write_diagnostics(&p, out)?;
        written.push(p);
    }
    Ok(written)
}
