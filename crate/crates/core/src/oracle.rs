//! Optimal static policy, OPT and regret accounting.

use crate::environment::{EnvError, Environment, ExpectedUtilities};
use crate::linalg::{solve_lp, LinalgError, LpProblem};
use crate::trace::RunTrace;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Environment(#[from] EnvError),
    #[error("duality check failed: {0}")]
    Duality(String),
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// `pi_star[j][k]`
    pub pi_star: Vec<Vec<f64>>,
    pub opt_per_round: f64,
    pub opt: f64,
    /// Multipliers of the resource rows.
    pub dual_lambda: Vec<f64>,
    /// Multipliers of the per-class mass rows.
    pub dual_class: Vec<f64>,
}

/// The static LP `max Σ_j p_j Σ_k π(j)_k u*(j)_k` subject to
/// `Σ_j p_j Σ_k π(j)_k b*(j)_k ≤ ρ` and `Σ_k π(j)_k ≤ 1`.
pub fn oracle_lp(class_probs: &[f64], expected: &[ExpectedUtilities], rho: &[f64]) -> LpProblem {
    let j_n = class_probs.len();
    let k_n = expected[0].utility.len();
    let m = rho.len();
    let n = j_n * k_n;
    let mut objective = vec![0.0; n];
    let mut rows = vec![vec![0.0; n]; m + j_n];
    for (j, (p, e)) in class_probs.iter().zip(expected).enumerate() {
        for k in 0..k_n {
            let v = j * k_n + k;
            objective[v] = p * e.utility[k];
            for r in 0..m {
                rows[r][v] = p * e.consumption[k][r];
            }
            rows[m + j][v] = 1.0;
        }
    }
    let mut rhs = rho.to_vec();
    rhs.extend(std::iter::repeat_n(1.0, j_n));
    LpProblem {
        objective,
        constraints: rows,
        rhs,
    }
}

pub fn solve_oracle(
    class_probs: &[f64],
    expected: &[ExpectedUtilities],
    rho: &[f64],
    horizon: usize,
) -> Result<OracleSolution> {
    let lp = oracle_lp(class_probs, expected, rho);
    let sol = solve_lp(&lp)?;
    let k_n = expected[0].utility.len();
    let m = rho.len();
    Ok(OracleSolution {
        pi_star: sol.x.chunks(k_n).map(|c| c.to_vec()).collect(),
        opt_per_round: sol.value,
        opt: sol.value * horizon as f64,
        dual_lambda: sol.duals[..m].to_vec(),
        dual_class: sol.duals[m..].to_vec(),
    })
}

/// Oracle for an environment whose context means are known.
pub fn solve_oracle_for(env: &Environment) -> Result<(OracleSolution, Vec<ExpectedUtilities>)> {
    let p = env.params();
    let expected = (0..p.classes)
        .map(|j| env.expected_utilities(j))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let sol = solve_oracle(&p.class_probs, &expected, &p.rho, p.horizon)?;
    Ok((sol, expected))
}

/// Checks primal and dual feasibility, complementary slackness and equal
/// objective values, all to `tol`.
pub fn check_duality(lp: &LpProblem, sol: &OracleSolution, tol: f64) -> Result<()> {
    let x: Vec<f64> = sol.pi_star.iter().flatten().copied().collect();
    let y: Vec<f64> = sol.dual_lambda.iter().chain(&sol.dual_class).copied().collect();
    let fail = |m: String| Err(OracleError::Duality(m));
    if x.iter().any(|&v| v < -tol) {
        return fail("negative primal value".into());
    }
    if y.iter().any(|&v| v < -tol) {
        return fail("negative dual value".into());
    }
    let mut dual_value = 0.0;
    for (i, (row, b)) in lp.constraints.iter().zip(&lp.rhs).enumerate() {
        let lhs: f64 = row.iter().zip(&x).map(|(a, v)| a * v).sum();
        if lhs > b + tol {
            return fail(format!("row {i} violated by {}", lhs - b));
        }
        if y[i] > tol && (b - lhs) > tol {
            return fail(format!("row {i} has multiplier {} but slack {}", y[i], b - lhs));
        }
        dual_value += b * y[i];
    }
    for (v, c) in lp.objective.iter().enumerate() {
        let reduced: f64 = lp.constraints.iter().zip(&y).map(|(row, yi)| row[v] * yi).sum::<f64>() - c;
        if reduced < -tol {
            return fail(format!("dual constraint {v} violated by {}", -reduced));
        }
        if x[v] > tol && reduced > tol {
            return fail(format!("variable {v} positive with reduced cost {reduced}"));
        }
    }
    let primal: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    if (primal - dual_value).abs() > tol * (1.0 + primal.abs()) || (primal - sol.opt_per_round).abs() > tol {
        return fail(format!("primal {primal} vs dual {dual_value}"));
    }
    Ok(())
}

/// `OPT/T - Σ_k w_k u*_k`; the skip weight (last entry) earns nothing.
pub fn round_regret(opt_per_round: f64, weights: &[f64], utility: &[f64]) -> f64 {
    opt_per_round - weights.iter().zip(utility).map(|(w, u)| w * u).sum::<f64>()
}

/// Prefix sums of per-round regret over the full horizon, charging
/// `OPT/T` for every round after an early stop.
pub fn cumulative_regret(inst: &[f64], horizon: usize, opt_per_round: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(horizon.max(inst.len()));
    for &r in inst {
        acc += r;
        out.push(acc);
    }
    for _ in inst.len()..horizon {
        acc += opt_per_round;
        out.push(acc);
    }
    out
}

/// Per-round regret of every played round of a trace.
pub fn trace_regret(trace: &RunTrace, oracle: &OracleSolution, expected: &[ExpectedUtilities]) -> Vec<f64> {
    trace
        .rounds
        .iter()
        .map(|r| round_regret(oracle.opt_per_round, &r.weights, &expected[r.class].utility))
        .collect()
}
