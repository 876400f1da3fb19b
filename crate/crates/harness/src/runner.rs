//! Expands a config into seeded runs, executes them and collects results.

use crate::config::{AlgorithmConfig, ExperimentConfig, ScenarioKind};
use crate::HarnessError;
use lmmp_core::amf::{run_amf, AmfConfig, ClassProbMode};
use lmmp_core::environment::{build_scenario, ContextDistribution, Environment, ExpectedUtilities, ModelParams};
use lmmp_core::oco::{run_oco, OcoConfig};
use lmmp_core::oracle::{cumulative_regret, solve_oracle, trace_regret, OracleSolution};
use lmmp_core::trace::RunTrace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;
const MONTE_CARLO_SAMPLES: usize = 1_000_000;

/// Independent 64-bit seed for run `index`.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(SEED_STRIDE);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hyperparameters reported next to every run.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub gamma_theta: Option<f64>,
    pub gamma_b: Option<f64>,
    pub delta: Option<f64>,
    pub class_probs: Option<ClassProbMode>,
    pub alpha: Option<f64>,
}

impl Hyper {
    /// Stable text key used to group runs.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            opt_num(self.gamma_theta),
            opt_num(self.gamma_b),
            opt_num(self.delta),
            self.class_probs.map_or("", class_probs_name),
            opt_num(self.alpha)
        )
    }
}

pub fn class_probs_name(m: ClassProbMode) -> &'static str {
    match m {
        ClassProbMode::Known => "known",
        ClassProbMode::Empirical => "empirical",
    }
}

pub(crate) fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone)]
enum Agent {
    Amf(AmfConfig),
    Oco { alpha: Option<f64>, eta: Option<f64> },
}

#[derive(Debug, Clone)]
struct RunSpec {
    index: usize,
    label: String,
    d_index: usize,
    repeat: usize,
    seed: u64,
    agent: Agent,
    hyper: Hyper,
}

/// One environment per entry of the `d` list, with its oracle.
pub struct ScenarioInstance {
    pub dim: usize,
    pub env: Environment,
    pub expected: Vec<ExpectedUtilities>,
    pub oracle: OracleSolution,
    pub budget: f64,
    /// Standard errors of Monte-Carlo utilities, empty for closed forms.
    pub monte_carlo_se: Vec<Vec<f64>>,
}

pub fn build_instances(cfg: &ExperimentConfig) -> Result<Vec<ScenarioInstance>, HarnessError> {
    let s = &cfg.scenario;
    s.d.iter()
        .map(|&d| {
            let budget = s.budget.total(d, s.horizon);
            let rho = budget / s.horizon as f64;
            let (params, dist) = match &s.kind {
                ScenarioKind::RegretComputable => (
                    ModelParams::regret_computable(d, s.arms, s.resources, rho, s.horizon, s.sigma_r, s.sigma_b),
                    ContextDistribution::RegretComputable,
                ),
                ScenarioKind::UniformMulticlass => {
                    let mut prng = ChaCha8Rng::seed_from_u64(s.parameter_seed);
                    (
                        ModelParams::uniform_multiclass(
                            s.classes,
                            s.arms,
                            d,
                            s.resources,
                            rho,
                            s.horizon,
                            s.sigma_r,
                            s.sigma_b,
                            &mut prng,
                        ),
                        ContextDistribution::UniformMulticlass,
                    )
                }
                ScenarioKind::CustomTable {
                    theta,
                    w,
                    class_probs,
                    support,
                    means,
                } => (
                    ModelParams {
                        classes: s.classes,
                        arms: s.arms,
                        dim: d,
                        resources: s.resources,
                        theta: theta.clone(),
                        w: w.clone(),
                        class_probs: class_probs
                            .clone()
                            .unwrap_or_else(|| vec![1.0 / s.classes as f64; s.classes]),
                        sigma_r: s.sigma_r,
                        sigma_b: s.sigma_b,
                        rho: vec![rho; s.resources],
                        horizon: s.horizon,
                    },
                    ContextDistribution::CustomTable {
                        support: support.clone(),
                        means: means.clone(),
                    },
                ),
            };
            let env = build_scenario(params, dist).map_err(|e| HarnessError::Invalid(e.to_string()))?;
            let mut monte_carlo_se = Vec::new();
            let expected = (0..s.classes)
                .map(|j| match env.expected_utilities(j) {
                    Ok(e) => e,
                    Err(_) => {
                        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(s.parameter_seed, j as u64));
                        let (e, se) = env.monte_carlo_utilities(j, MONTE_CARLO_SAMPLES, &mut rng);
                        monte_carlo_se.push(se);
                        e
                    }
                })
                .collect::<Vec<_>>();
            let p = env.params();
            let oracle = solve_oracle(&p.class_probs, &expected, &p.rho, p.horizon)
                .map_err(|e| HarnessError::Core(format!("oracle LP at d = {d}: {e}")))?;
            Ok(ScenarioInstance {
                dim: d,
                env,
                expected,
                oracle,
                budget,
                monte_carlo_se,
            })
        })
        .collect()
}

fn expand(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let s = &cfg.scenario;
    let mut specs = Vec::new();
    for d_index in 0..s.d.len() {
        for alg in &cfg.algorithms {
            let variants: Vec<(String, Agent, Hyper)> = match alg {
                AlgorithmConfig::Amf {
                    label,
                    gamma_theta,
                    gamma_b,
                    delta,
                    class_probs,
                    bonus,
                    gate_scale,
                } => {
                    let mut v = Vec::new();
                    for &gt in gamma_theta {
                        for &gb in gamma_b {
                            for dl in delta {
                                let delta = dl.resolve(s.resources, s.horizon);
                                let amf = AmfConfig {
                                    gamma_theta: gt,
                                    gamma_b: gb,
                                    delta,
                                    class_probs: *class_probs,
                                    bonus: *bonus,
                                    gate_scale: *gate_scale,
                                    record_diagnostics: cfg.diagnostics,
                                };
                                let hyper = Hyper {
                                    gamma_theta: Some(gt),
                                    gamma_b: Some(gb),
                                    delta: Some(delta),
                                    class_probs: Some(*class_probs),
                                    alpha: None,
                                };
                                v.push((label.clone().unwrap_or_else(|| "amf".into()), Agent::Amf(amf), hyper));
                            }
                        }
                    }
                    v
                }
                AlgorithmConfig::Oco { label, alpha, eta } => vec![(
                    label.clone().unwrap_or_else(|| "oco".into()),
                    Agent::Oco {
                        alpha: *alpha,
                        eta: *eta,
                    },
                    Hyper {
                        gamma_theta: None,
                        gamma_b: None,
                        delta: None,
                        class_probs: None,
                        alpha: *alpha,
                    },
                )],
            };
            for (label, agent, hyper) in variants {
                for repeat in 0..cfg.repeats {
                    let index = specs.len();
                    specs.push(RunSpec {
                        index,
                        label: label.clone(),
                        d_index,
                        repeat,
                        seed: mix_seed(cfg.master_seed, index as u64),
                        agent: agent.clone(),
                        hyper: hyper.clone(),
                    });
                }
            }
        }
    }
    specs
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRow {
    pub t: usize,
    /// One-based class, 0 after an early exit.
    pub class_j: usize,
    /// One-based arm, 0 for skip or after an early exit.
    pub action: usize,
    pub reward: f64,
    pub consumption: Vec<f64>,
    pub slack: Vec<f64>,
    pub regret_inst: f64,
    pub regret_cum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub t: usize,
    pub lambda_min: Vec<f64>,
    pub theta_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_id: usize,
    pub algo: String,
    pub d: usize,
    pub repeat: usize,
    pub seed: u64,
    pub hyper: Hyper,
    pub horizon: usize,
    pub budget: f64,
    pub opt: f64,
    pub final_regret: f64,
    pub final_reward: f64,
    pub rounds_survived: usize,
    pub exhausted: bool,
    pub max_round_consumption: f64,
    pub consumption: Vec<f64>,
    /// Empty unless the config asks for round output.
    pub rounds: Vec<RoundRow>,
    pub diagnostics: Vec<DiagnosticRow>,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub resources: usize,
    pub classes: usize,
    pub runs: Vec<RunResult>,
}

fn execute(spec: &RunSpec, inst: &ScenarioInstance, keep_rounds: bool) -> Result<RunResult, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let trace: RunTrace = match &spec.agent {
        Agent::Amf(cfg) => run_amf(&inst.env, cfg, &mut rng).map_err(|e| HarnessError::Core(e.to_string()))?,
        Agent::Oco { alpha, eta } => {
            let cfg = OcoConfig {
                z: inst.oracle.opt / inst.budget,
                alpha: *alpha,
                eta: *eta,
                budget: None,
            };
            run_oco(&inst.env, &cfg, &mut rng).map_err(|e| HarnessError::Core(e.to_string()))?
        }
    };
    let p = inst.env.params();
    let horizon = p.horizon;
    let opt_t = inst.oracle.opt_per_round;
    let inst_regret = trace_regret(&trace, &inst.oracle, &inst.expected);
    let cum = cumulative_regret(&inst_regret, horizon, opt_t);
    let consumption = trace.total_consumption();

    let mut rounds = Vec::new();
    if keep_rounds {
        rounds.reserve(horizon);
        for (i, r) in trace.rounds.iter().enumerate() {
            rounds.push(RoundRow {
                t: r.t,
                class_j: r.class + 1,
                action: r.action.map_or(0, |a| a + 1),
                reward: r.reward,
                consumption: r.consumption.clone(),
                slack: r.slack.clone(),
                regret_inst: inst_regret[i],
                regret_cum: cum[i],
            });
        }
        for t in trace.rounds.len() + 1..=horizon {
            rounds.push(RoundRow {
                t,
                class_j: 0,
                action: 0,
                reward: 0.0,
                consumption: vec![0.0; p.resources],
                slack: p.rho.iter().zip(&consumption).map(|(r, c)| t as f64 * r - c).collect(),
                regret_inst: opt_t,
                regret_cum: cum[t - 1],
            });
        }
    }
    let diagnostics = trace
        .diagnostics
        .iter()
        .map(|d| DiagnosticRow {
            t: d.t,
            lambda_min: d.lambda_min.clone(),
            theta_error: d.theta_error,
        })
        .collect();
    Ok(RunResult {
        run_id: spec.index + 1,
        algo: spec.label.clone(),
        d: inst.dim,
        repeat: spec.repeat,
        seed: spec.seed,
        hyper: spec.hyper.clone(),
        horizon,
        budget: inst.budget,
        opt: inst.oracle.opt,
        final_regret: cum.last().copied().unwrap_or(0.0),
        final_reward: trace.total_reward(),
        rounds_survived: trace.rounds.len(),
        exhausted: trace.exhausted(),
        max_round_consumption: trace.max_round_consumption(),
        consumption,
        rounds,
        diagnostics,
    })
}

/// Runs every (d, algorithm, hyperparameter, repeat) combination of the
/// config on `threads` workers. Results come back in run order regardless
/// of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate().map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let instances = build_instances(cfg)?;
    let specs = expand(cfg);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Core(format!("thread pool: {e}")))?;
    let runs = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| execute(spec, &instances[spec.d_index], cfg.write_rounds))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(ExperimentOutput {
        resources: cfg.scenario.resources,
        classes: cfg.scenario.classes,
        runs,
    })
}
