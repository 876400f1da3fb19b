//! Default configurations for the three standard experiments.

use crate::config::{
    AlgorithmConfig, BudgetRule, DeltaSpec, ExperimentConfig, ExperimentKind, ScenarioConfig, ScenarioKind,
    SCHEMA_VERSION,
};
use lmmp_core::amf::{BonusMode, ClassProbMode};
use std::path::PathBuf;

/// Command-line overrides applied on top of a preset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub repeats: Option<usize>,
    pub horizon: Option<usize>,
    pub master_seed: Option<u64>,
    pub d: Option<Vec<usize>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(o) = &self.out_dir {
            cfg.out_dir = o.clone();
        }
        if let Some(r) = self.repeats {
            cfg.repeats = r;
        }
        if let Some(h) = self.horizon {
            cfg.scenario.horizon = h;
        }
        if let Some(s) = self.master_seed {
            cfg.master_seed = s;
        }
        if let Some(d) = &self.d {
            cfg.scenario.d = d.clone();
        }
    }
}

fn amf(gamma_theta: Vec<f64>, gamma_b: Vec<f64>, delta: Vec<f64>) -> AlgorithmConfig {
    AlgorithmConfig::Amf {
        label: None,
        gamma_theta,
        gamma_b,
        delta: delta.into_iter().map(DeltaSpec::Value).collect(),
        class_probs: ClassProbMode::Known,
        bonus: BonusMode::Algorithm1,
        gate_scale: 1e-3,
    }
}

fn single_class(d: Vec<usize>, budget: BudgetRule) -> ScenarioConfig {
    ScenarioConfig {
        kind: ScenarioKind::RegretComputable,
        d,
        arms: 20,
        resources: 20,
        classes: 1,
        horizon: 5000,
        budget,
        sigma_r: 0.1,
        sigma_b: 0.1,
        parameter_seed: 2024,
    }
}

/// Dimension sweep with `B = √(dT)`.
pub fn fig1() -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment: ExperimentKind::Fig1DimensionSweep,
        scenario: single_class(vec![5, 10, 20, 40], BudgetRule::SqrtDT),
        algorithms: vec![amf(vec![1.0], vec![1.0], vec![0.1])],
        repeats: 20,
        master_seed: 1,
        out_dir: PathBuf::from("out/fig1"),
        write_rounds: false,
        diagnostics: false,
    }
}

/// AMF against the OCO baseline at `d = 20`.
pub fn fig2(budget: BudgetRule) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment: ExperimentKind::Fig2Compare,
        scenario: single_class(vec![20], budget),
        algorithms: vec![
            amf(vec![1.0], vec![1.0], vec![0.01]),
            AlgorithmConfig::Oco {
                label: None,
                alpha: None,
                eta: None,
            },
        ],
        repeats: 20,
        master_seed: 2,
        out_dir: PathBuf::from("out/fig2"),
        write_rounds: true,
        diagnostics: false,
    }
}

/// Hyperparameter grid on the three-class scenario.
pub fn fig3() -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment: ExperimentKind::Fig3Sensitivity,
        scenario: ScenarioConfig {
            kind: ScenarioKind::UniformMulticlass,
            d: vec![5],
            arms: 10,
            resources: 3,
            classes: 3,
            horizon: 2000,
            budget: BudgetRule::PerPeriod { rho: 0.5 },
            sigma_r: 0.1,
            sigma_b: 0.1,
            parameter_seed: 2024,
        },
        algorithms: vec![amf(
            vec![0.01, 0.1, 1.0],
            vec![0.01, 0.1, 1.0],
            vec![1e-1, 1e-4, 1e-7],
        )],
        repeats: 10,
        master_seed: 3,
        out_dir: PathBuf::from("out/fig3"),
        write_rounds: true,
        diagnostics: false,
    }
}
