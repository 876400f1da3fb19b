//! Online-mirror-descent baseline for the single-class problem.
//!
//! Estimates come from a ridge regression on the contexts of played arms
//! only. Each round the arm maximising `UCB reward - Z·Σ_r λ_r·LCB cost(r)`
//! is played, where `λ` is a multiplicative-weights distribution over the
//! `m` resources and one idle coordinate. The agent never skips and stops
//! when a resource's budget is used up.

use crate::environment::{mat_t_vec, Arrival, EnvError, Environment, Feedback};
use crate::linalg::{Cholesky, LinalgError, SymMatrix};
use crate::trace::{AgentRound, BudgetLedger, RunTrace};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcoError {
    #[error("OCO baseline is single-class")]
    MultiClass,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Environment(#[from] EnvError),
}

pub type Result<T> = std::result::Result<T, OcoError>;

#[derive(Debug, Clone, PartialEq)]
pub struct OcoConfig {
    /// `OPT/B`, the price of one unit of budget.
    pub z: f64,
    /// Fixed confidence width; `None` uses `√d·log(t+1) + 1`.
    pub alpha: Option<f64>,
    /// Dual step size; `None` uses `√(log(m+1)/T)`.
    pub eta: Option<f64>,
    /// Total budget per resource; `None` uses `Tρ`.
    pub budget: Option<Vec<f64>>,
}

impl OcoConfig {
    pub fn new(z: f64) -> Self {
        Self {
            z,
            alpha: None,
            eta: None,
            budget: None,
        }
    }
}

pub fn default_alpha(dim: usize, t: usize) -> f64 {
    (dim as f64).sqrt() * ((t + 1) as f64).ln() + 1.0
}

pub fn default_eta(resources: usize, horizon: usize) -> f64 {
    (((resources + 1) as f64).ln() / horizon as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct OcoState {
    dim: usize,
    resources: usize,
    gram: SymMatrix,
    score_r: Vec<f64>,
    // row-major d x m
    score_b: Vec<f64>,
    /// `m` resource weights followed by the idle weight.
    dual: Vec<f64>,
    z: f64,
}

impl OcoState {
    pub fn new(dim: usize, resources: usize, z: f64) -> Self {
        let w = 1.0 / (resources + 1) as f64;
        Self {
            dim,
            resources,
            gram: SymMatrix::identity(dim),
            score_r: vec![0.0; dim],
            score_b: vec![0.0; dim * resources],
            dual: vec![w; resources + 1],
            z,
        }
    }

    pub fn dual_weights(&self) -> &[f64] {
        &self.dual
    }

    pub fn gram(&self) -> &SymMatrix {
        &self.gram
    }

    /// Arm maximising the penalised optimistic score, lowest index on ties.
    pub fn select(&self, arrival: &Arrival, alpha: f64) -> Result<usize> {
        let chol = Cholesky::factor(&self.gram)?;
        let theta = chol.solve(&self.score_r);
        let w = chol.solve_mat(&self.score_b, self.resources);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, x) in arrival.contexts.iter().enumerate() {
            let width = alpha * chol.inv_quad(x).max(0.0).sqrt();
            let mean_r: f64 = theta.iter().zip(x).map(|(a, b)| a * b).sum();
            let ucb = (mean_r + width).clamp(-1.0, 1.0 + 2.0 * alpha);
            let cost = mat_t_vec(&w, self.dim, self.resources, x);
            let penalty: f64 = cost
                .iter()
                .zip(&self.dual)
                .map(|(c, l)| l * (c - width).clamp(0.0, 1.0))
                .sum();
            let score = ucb - self.z * penalty;
            if score > best_score {
                best = k;
                best_score = score;
            }
        }
        Ok(best)
    }

    pub fn update(&mut self, x: &[f64], feedback: &Feedback, rho: &[f64], eta: f64) {
        self.gram.add_outer(x, 1.0);
        let m = self.resources;
        for i in 0..self.dim {
            self.score_r[i] += x[i] * feedback.reward;
            for r in 0..m {
                self.score_b[i * m + r] += x[i] * feedback.consumption[r];
            }
        }
        for r in 0..m {
            self.dual[r] *= (eta * (feedback.consumption[r] - rho[r])).exp();
        }
        let total: f64 = self.dual.iter().sum();
        for v in self.dual.iter_mut() {
            *v /= total;
        }
    }
}

pub fn run_oco<R: Rng + ?Sized>(env: &Environment, config: &OcoConfig, rng: &mut R) -> Result<RunTrace> {
    let p = env.params();
    if p.classes != 1 {
        return Err(OcoError::MultiClass);
    }
    if !config.z.is_finite() || config.z < 0.0 {
        return Err(OcoError::Config("z must be finite and nonnegative".into()));
    }
    let horizon = p.horizon;
    let eta = config.eta.unwrap_or_else(|| default_eta(p.resources, horizon));
    let mut ledger = match &config.budget {
        Some(b) if b.len() == p.resources => BudgetLedger::with_budget(p.rho.clone(), b.clone()),
        Some(_) => return Err(OcoError::Config("budget needs one entry per resource".into())),
        None => BudgetLedger::new(p.rho.clone(), horizon),
    };
    let mut state = OcoState::new(p.dim, p.resources, config.z);
    let mut trace = RunTrace {
        algo: "oco".into(),
        horizon,
        budget: ledger.budget().to_vec(),
        rounds: Vec::with_capacity(horizon),
        exit_round: None,
        diagnostics: Vec::new(),
    };
    if ledger.exhausted() {
        trace.exit_round = Some(0);
        return Ok(trace);
    }
    for t in 1..=horizon {
        let arrival = env.sample_arrival(t, rng);
        let alpha = config.alpha.unwrap_or_else(|| default_alpha(p.dim, t));
        let slack = ledger.slack();
        let a = state.select(&arrival, alpha)?;
        let fb = env.sample_feedback(&arrival, a, rng)?;
        state.update(&arrival.contexts[a], &fb, &p.rho, eta);
        ledger.record(&fb.consumption);
        let mut weights = vec![0.0; p.arms + 1];
        weights[a] = 1.0;
        trace.rounds.push(AgentRound {
            t,
            class: 0,
            weights,
            action: Some(a),
            reward: fb.reward,
            consumption: fb.consumption,
            slack,
            explored: false,
        });
        if ledger.exhausted() {
            if t < horizon {
                trace.exit_round = Some(t);
            }
            break;
        }
    }
    Ok(trace)
}
