//! JSON experiment configuration: a single schema serves every experiment,
//! with documented defaults and strict rejection of unknown keys.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentName {
    Convergence,
    Sensitivity,
    Conditioning,
    Nesterov,
    Highdim,
    Regpath,
    Activeset,
    Weights,
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentName::Convergence => "convergence",
            ExperimentName::Sensitivity => "sensitivity",
            ExperimentName::Conditioning => "conditioning",
            ExperimentName::Nesterov => "nesterov",
            ExperimentName::Highdim => "highdim",
            ExperimentName::Regpath => "regpath",
            ExperimentName::Activeset => "activeset",
            ExperimentName::Weights => "weights",
        };
        f.write_str(s)
    }
}

impl FromStr for ExperimentName {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| ConfigError::Invalid(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

fn default_adam() -> AdamParams {
    AdamParams { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl PenaltyGrid {
    /// Log-spaced precisions from `max` down to `min` (the path walks from
    /// most to least regularized).
    pub fn decreasing(&self) -> Vec<f64> {
        let k = self.count.max(1);
        if k == 1 {
            return vec![self.max];
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        (0..k)
            .map(|i| (hi + (lo - hi) * i as f64 / (k - 1) as f64).exp())
            .collect()
    }
}

fn default_penalty_grid() -> PenaltyGrid {
    PenaltyGrid { min: 1e-4, max: 1e1, count: 40 }
}

fn default_batch_size() -> usize {
    256
}

fn default_prm_batch_size() -> usize {
    20
}

fn default_prm_step_scale() -> f64 {
    0.5
}

fn default_rho() -> f64 {
    0.01
}

fn default_adam_default_lr() -> f64 {
    1e-3
}

fn default_adam_lr_grid() -> Vec<f64> {
    vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2]
}

fn default_sgd_momentum() -> f64 {
    0.9
}

fn default_sensitivity_points() -> usize {
    8
}

fn default_dims() -> Vec<usize> {
    vec![20, 50, 100, 200]
}

fn default_probe_count() -> usize {
    5
}

fn default_lasso_tau() -> f64 {
    1.0
}

/// One experiment run. Absent fields take the documented defaults; the
/// iteration/epoch budgets default per experiment (100 for `nesterov`,
/// 80 otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentName,

    /// Preset override for single-preset experiments (e.g. "cond500",
    /// "highdim(200)").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cond: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,

    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_prm_batch_size")]
    pub prm_batch_size: usize,
    #[serde(default = "default_prm_step_scale")]
    pub prm_step_scale: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_adam")]
    pub adam: AdamParams,
    #[serde(default = "default_adam_default_lr")]
    pub adam_default_lr: f64,
    #[serde(default = "default_adam_lr_grid")]
    pub adam_lr_grid: Vec<f64>,
    #[serde(default = "default_sgd_momentum")]
    pub sgd_momentum: f64,
    #[serde(default = "default_sensitivity_points")]
    pub sensitivity_points: usize,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_penalty_grid")]
    pub penalty_grid: PenaltyGrid,
    #[serde(default = "default_probe_count")]
    pub probe_count: usize,
    #[serde(default = "default_lasso_tau")]
    pub lasso_tau: f64,
}

impl ExperimentConfig {
    /// All defaults for the named experiment.
    pub fn default_for(experiment: ExperimentName) -> Self {
        let doc = serde_json::json!({ "experiment": experiment.to_string() });
        serde_json::from_value(doc).expect("defaults are self-consistent")
    }

    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or(match self.experiment {
            ExperimentName::Nesterov => 100,
            _ => 80,
        })
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or(match self.experiment {
            ExperimentName::Nesterov => 100,
            _ => 80,
        })
    }

    fn check(self) -> Result<Self, ConfigError> {
        if self.iterations == Some(0) && self.experiment != ExperimentName::Weights {
            // zero budgets are allowed; nothing to reject here
        }
        if self.batch_size == 0 || self.prm_batch_size == 0 {
            return Err(ConfigError::Invalid("batch sizes must be at least 1".into()));
        }
        if self.rho < 0.0 {
            return Err(ConfigError::Invalid("rho must be nonnegative".into()));
        }
        if self.penalty_grid.count == 0
            || self.penalty_grid.min <= 0.0
            || self.penalty_grid.max < self.penalty_grid.min
        {
            return Err(ConfigError::Invalid(
                "penalty_grid requires 0 < min ≤ max and count ≥ 1".into(),
            ));
        }
        if self.adam_lr_grid.is_empty() || self.adam_lr_grid.iter().any(|lr| *lr <= 0.0) {
            return Err(ConfigError::Invalid("adam_lr_grid must hold positive rates".into()));
        }
        if self.dims.is_empty() {
            return Err(ConfigError::Invalid("dims must not be empty".into()));
        }
        Ok(self)
    }
}

/// Parse and validate a JSON configuration document. Unknown keys are
/// rejected with the offending key named; missing optional fields take the
/// documented defaults.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.check()
}
