//! Per-round run logs shared by every agent.

/// One simulated round as seen by the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRound {
    /// One-based round index.
    pub t: usize,
    pub class: usize,
    /// Probabilities over the `K` arms followed by skip. Deterministic
    /// choices are stored as point masses.
    pub weights: Vec<f64>,
    /// Zero-based arm, or `None` for skip.
    pub action: Option<usize>,
    pub reward: f64,
    pub consumption: Vec<f64>,
    /// `tρ - Σ_{s<t} b_s` at decision time.
    pub slack: Vec<f64>,
    pub explored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorDiagnostics {
    pub t: usize,
    pub lambda_min: Vec<f64>,
    pub theta_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub algo: String,
    pub horizon: usize,
    pub budget: Vec<f64>,
    pub rounds: Vec<AgentRound>,
    /// Round after which the agent stopped because a resource ran out.
    pub exit_round: Option<usize>,
    pub diagnostics: Vec<EstimatorDiagnostics>,
}

impl RunTrace {
    pub fn total_reward(&self) -> f64 {
        self.rounds.iter().map(|r| r.reward).sum()
    }

    pub fn total_consumption(&self) -> Vec<f64> {
        let mut tot = vec![0.0; self.budget.len()];
        for r in &self.rounds {
            for (t, c) in tot.iter_mut().zip(&r.consumption) {
                *t += c;
            }
        }
        tot
    }

    /// Largest single-round consumption of any resource.
    pub fn max_round_consumption(&self) -> f64 {
        self.rounds
            .iter()
            .flat_map(|r| r.consumption.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn exhausted(&self) -> bool {
        self.exit_round.is_some()
    }
}

/// Running consumption against a fixed total budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    rho: Vec<f64>,
    budget: Vec<f64>,
    consumed: Vec<f64>,
    rounds: usize,
}

impl BudgetLedger {
    /// Ledger with per-period budget `rho` and total budget `Tρ`.
    pub fn new(rho: Vec<f64>, horizon: usize) -> Self {
        let budget = rho.iter().map(|r| r * horizon as f64).collect();
        Self::with_budget(rho, budget)
    }

    pub fn with_budget(rho: Vec<f64>, budget: Vec<f64>) -> Self {
        let m = rho.len();
        Self {
            rho,
            budget,
            consumed: vec![0.0; m],
            rounds: 0,
        }
    }

    /// Slack for the upcoming round `t = rounds + 1`.
    pub fn slack(&self) -> Vec<f64> {
        let t = (self.rounds + 1) as f64;
        self.rho.iter().zip(&self.consumed).map(|(r, c)| t * r - c).collect()
    }

    pub fn record(&mut self, consumption: &[f64]) {
        for (c, b) in self.consumed.iter_mut().zip(consumption) {
            *c += b;
        }
        self.rounds += 1;
    }

    pub fn consumed(&self) -> &[f64] {
        &self.consumed
    }

    pub fn budget(&self) -> &[f64] {
        &self.budget
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// True once any resource has used up its total budget.
    pub fn exhausted(&self) -> bool {
        self.consumed.iter().zip(&self.budget).any(|(c, b)| c >= b)
    }
}
