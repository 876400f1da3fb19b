//! JSON experiment configuration.

use lmmp_core::amf::{BonusMode, ClassProbMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Fig1DimensionSweep,
    Fig2Compare,
    Fig3Sensitivity,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    RegretComputable,
    UniformMulticlass,
    /// Explicit per-class parameters and context tables; `d` must then hold
    /// a single value matching the table.
    CustomTable {
        theta: Vec<Vec<f64>>,
        /// `w[j]` is row-major `d x m`.
        w: Vec<Vec<f64>>,
        #[serde(default)]
        class_probs: Option<Vec<f64>>,
        support: Vec<Vec<Vec<Vec<f64>>>>,
        #[serde(default)]
        means: Option<Vec<Vec<Vec<f64>>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BudgetRule {
    /// `B = √(dT)`
    #[serde(rename = "sqrt_dT")]
    SqrtDT,
    /// `B = √d·T^{3/4}`
    #[serde(rename = "sqrtd_T34")]
    SqrtdT34,
    /// Fixed total budget per resource.
    Explicit { total: f64 },
    /// Fixed per-period budget `ρ`, so `B = Tρ`.
    PerPeriod { rho: f64 },
}

impl BudgetRule {
    pub fn total(&self, dim: usize, horizon: usize) -> f64 {
        let (d, t) = (dim as f64, horizon as f64);
        match self {
            BudgetRule::SqrtDT => (d * t).sqrt(),
            BudgetRule::SqrtdT34 => d.sqrt() * t.powf(0.75),
            BudgetRule::Explicit { total } => *total,
            BudgetRule::PerPeriod { rho } => rho * t,
        }
    }
}

fn default_sigma() -> f64 {
    0.1
}

fn default_parameter_seed() -> u64 {
    2024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(flatten)]
    pub kind: ScenarioKind,
    pub d: Vec<usize>,
    pub arms: usize,
    pub resources: usize,
    #[serde(default = "one")]
    pub classes: usize,
    pub horizon: usize,
    pub budget: BudgetRule,
    #[serde(default = "default_sigma")]
    pub sigma_r: f64,
    #[serde(default = "default_sigma")]
    pub sigma_b: f64,
    /// Seed for randomly drawn ground-truth parameters.
    #[serde(default = "default_parameter_seed")]
    pub parameter_seed: u64,
}

fn one() -> usize {
    1
}

/// Confidence level: a number in (0, 1) or `"theory"` for `1/(mT³)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSpec {
    Value(f64),
    Named(DeltaName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaName {
    Theory,
}

impl DeltaSpec {
    pub fn resolve(&self, resources: usize, horizon: usize) -> f64 {
        match self {
            DeltaSpec::Value(v) => *v,
            DeltaSpec::Named(DeltaName::Theory) => 1.0 / (resources as f64 * (horizon as f64).powi(3)),
        }
    }
}

fn default_gamma() -> Vec<f64> {
    vec![1.0]
}

fn default_delta() -> Vec<DeltaSpec> {
    vec![DeltaSpec::Value(0.1)]
}

fn default_gate_scale() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AlgorithmConfig {
    Amf {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_gamma")]
        gamma_theta: Vec<f64>,
        #[serde(default = "default_gamma")]
        gamma_b: Vec<f64>,
        #[serde(default = "default_delta")]
        delta: Vec<DeltaSpec>,
        #[serde(default)]
        class_probs: ClassProbMode,
        #[serde(default)]
        bonus: BonusMode,
        #[serde(default = "default_gate_scale")]
        gate_scale: f64,
    },
    Oco {
        #[serde(default)]
        label: Option<String>,
        /// Fixed confidence width; omitted means `√d·log(t+1) + 1`.
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        eta: Option<f64>,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub scenario: ScenarioConfig,
    pub algorithms: Vec<AlgorithmConfig>,
    pub repeats: usize,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "default_true")]
    pub write_rounds: bool,
    #[serde(default)]
    pub diagnostics: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        let s = &self.scenario;
        if s.d.is_empty() || s.d.contains(&0) {
            return bad("d must be a nonempty list of positive dimensions".into());
        }
        if s.arms == 0 || s.resources == 0 || s.classes == 0 || s.horizon == 0 {
            return bad("arms, resources, classes and horizon must be positive".into());
        }
        if !(s.sigma_r >= 0.0 && s.sigma_b >= 0.0) || !s.sigma_r.is_finite() || !s.sigma_b.is_finite() {
            return bad("noise scales must be finite and nonnegative".into());
        }
        for &d in &s.d {
            let b = s.budget.total(d, s.horizon);
            if !(b > 0.0) || !b.is_finite() {
                return bad(format!("budget rule gives B = {b} at d = {d}; it must be positive"));
            }
        }
        match &s.kind {
            ScenarioKind::RegretComputable if s.classes != 1 => {
                return bad("regret_computable is single-class".into());
            }
            ScenarioKind::CustomTable { theta, .. } => {
                if s.d.len() != 1 {
                    return bad("custom_table needs exactly one d value".into());
                }
                if theta.len() != s.classes {
                    return bad("custom_table theta needs one vector per class".into());
                }
            }
            _ => {}
        }
        for a in &self.algorithms {
            match a {
                AlgorithmConfig::Amf {
                    gamma_theta,
                    gamma_b,
                    delta,
                    gate_scale,
                    ..
                } => {
                    if gamma_theta.is_empty() || gamma_b.is_empty() || delta.is_empty() {
                        return bad("amf grids must be nonempty".into());
                    }
                    if gamma_theta.iter().chain(gamma_b).any(|g| !(*g >= 0.0) || !g.is_finite()) {
                        return bad("confidence lengths must be finite and nonnegative".into());
                    }
                    for dl in delta {
                        let v = dl.resolve(s.resources, s.horizon);
                        if !(v > 0.0 && v < 1.0) {
                            return bad(format!("delta {v} is outside (0, 1)"));
                        }
                    }
                    if !(*gate_scale >= 0.0) || !gate_scale.is_finite() {
                        return bad("gate_scale must be finite and nonnegative".into());
                    }
                }
                AlgorithmConfig::Oco { alpha, eta, .. } => {
                    if s.classes != 1 {
                        return bad("the oco baseline needs a single-class scenario".into());
                    }
                    if alpha.is_some_and(|v| !(v >= 0.0) || !v.is_finite())
                        || eta.is_some_and(|v| !(v >= 0.0) || !v.is_finite())
                    {
                        return bad("oco alpha and eta must be finite and nonnegative".into());
                    }
                }
            }
        }
        Ok(())
    }
}
