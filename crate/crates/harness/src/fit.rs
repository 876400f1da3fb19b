//! Log-log least-squares fits of final regret against dimension.

use crate::runner::{Hyper, RunResult};
use crate::HarnessError;
use std::collections::BTreeMap;

/// Ordinary least squares of `log y` on `log x`; returns `(slope, intercept)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64), HarnessError> {
    if points.len() < 2 {
        return Err(HarnessError::Invalid("a slope needs at least two points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0)) {
        return Err(HarnessError::Invalid("cannot take log".into()));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Invalid("a slope needs at least two distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub algo: String,
    pub hyper: Hyper,
    pub n_points: usize,
    pub slope: f64,
    pub intercept: f64,
}

/// `d -> (mean final regret, run count)`
pub type RegretByD = BTreeMap<usize, (f64, usize)>;

/// Keyed by algorithm label and [`Hyper::key`].
pub type RegretGroups = BTreeMap<(String, String), (Hyper, RegretByD)>;

/// Mean final regret per `d` for each algorithm and hyperparameter group.
pub fn mean_regret_by_d(runs: &[RunResult]) -> RegretGroups {
    let mut groups = RegretGroups::new();
    for r in runs {
        let entry = groups
            .entry((r.algo.clone(), r.hyper.key()))
            .or_insert_with(|| (r.hyper.clone(), BTreeMap::new()));
        let cell = entry.1.entry(r.d).or_insert((0.0, 0));
        cell.0 += r.final_regret;
        cell.1 += 1;
    }
    for (_, per_d) in groups.values_mut() {
        for cell in per_d.values_mut() {
            cell.0 /= cell.1 as f64;
        }
    }
    groups
}

/// One fit per group with at least two dimensions.
pub fn fit_groups(runs: &[RunResult]) -> Result<Vec<FitRow>, HarnessError> {
    let mut rows = Vec::new();
    for ((algo, _), (hyper, per_d)) in mean_regret_by_d(runs) {
        if per_d.len() < 2 {
            continue;
        }
        let points: Vec<(f64, f64)> = per_d.iter().map(|(d, (m, _))| (*d as f64, *m)).collect();
        let (slope, intercept) = fit_loglog_slope(&points)?;
        rows.push(FitRow {
            algo,
            hyper,
            n_points: points.len(),
            slope,
            intercept,
        });
    }
    Ok(rows)
}
