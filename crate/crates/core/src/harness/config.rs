//! Environment configuration, read from JSON.
//!
//! ```json
//! { "task": "simple", "c": 0.1, "cs": 0.2, "betas": [0.8] }
//! ```
//!
//! Every other field has a default; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::DEFAULT_INFOMAX_HORIZON;
use crate::grid::{BeliefState, GridError};
use crate::observation::{ModelError, TaskKind, TaskModel};
use crate::solver::{CostParams, SolveError, SolveOptions, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};

use super::trial::{TrialSetup, DEFAULT_TRIAL_CAP};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{task:?} task takes {expected} beta parameter(s), got {got}")]
    BetaCount { task: TaskKind, expected: usize, got: usize },
    #[error("unknown fixation {0:?}")]
    Fixation(String),
    #[error("prior must have 3 entries")]
    PriorSize,
    #[error("{0} must be at least 1")]
    Zero(&'static str),
}

pub const DEFAULT_GRID_N: usize = 200;
pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 20_130_101;

fn default_grid_n() -> usize {
    DEFAULT_GRID_N
}
fn default_cap() -> usize {
    DEFAULT_TRIAL_CAP
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_trials() -> usize {
    DEFAULT_TRIALS
}
fn default_horizon() -> usize {
    DEFAULT_INFOMAX_HORIZON
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_sweeps() -> usize {
    DEFAULT_MAX_SWEEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub task: TaskKind,
    pub c: f64,
    #[serde(default)]
    pub cs: f64,
    /// `[beta1]` for the simple task, `[b1, b2, b3, b4]` for the peripheral.
    pub betas: Vec<f64>,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    /// Fixation name (`"1"`..`"3"` or `"l1"`..`"l123"`); defaults to the
    /// first location for the simple task and the centre otherwise.
    #[serde(default)]
    pub initial_fixation: Option<String>,
    /// Defaults to uniform.
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    #[serde(default = "default_cap")]
    pub trial_cap: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_horizon")]
    pub infomax_horizon: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
    #[serde(default)]
    pub include_greedy: bool,
}

impl EnvironmentConfig {
    pub fn new(task: TaskKind, c: f64, cs: f64, betas: Vec<f64>) -> Self {
        Self {
            task,
            c,
            cs,
            betas,
            grid_n: DEFAULT_GRID_N,
            initial_fixation: None,
            prior: None,
            trial_cap: DEFAULT_TRIAL_CAP,
            seed: DEFAULT_SEED,
            trials: DEFAULT_TRIALS,
            infomax_horizon: DEFAULT_INFOMAX_HORIZON,
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            include_greedy: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let cfg = Self::from_json(&text)
            .map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model()?;
        self.costs()?;
        self.trial_setup()?;
        if self.grid_n == 0 {
            return Err(ConfigError::Zero("grid_n"));
        }
        if self.trials == 0 {
            return Err(ConfigError::Zero("trials"));
        }
        if self.infomax_horizon == 0 {
            return Err(ConfigError::Zero("infomax_horizon"));
        }
        if !(self.tol > 0.0) {
            return Err(SolveError::BadTolerance(self.tol).into());
        }
        Ok(())
    }

    pub fn model(&self) -> Result<TaskModel, ConfigError> {
        let expected = match self.task {
            TaskKind::Simple => 1,
            TaskKind::Peripheral => 4,
        };
        if self.betas.len() != expected {
            return Err(ConfigError::BetaCount { task: self.task, expected, got: self.betas.len() });
        }
        Ok(match self.task {
            TaskKind::Simple => TaskModel::simple(self.betas[0])?,
            TaskKind::Peripheral => {
                TaskModel::peripheral([self.betas[0], self.betas[1], self.betas[2], self.betas[3]])?
            }
        })
    }

    pub fn costs(&self) -> Result<CostParams, ConfigError> {
        Ok(CostParams::new(self.c, self.cs)?)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { tol: self.tol, max_sweeps: self.max_sweeps }
    }

    pub fn initial_fixation_index(&self) -> Result<usize, ConfigError> {
        let model = self.model()?;
        match &self.initial_fixation {
            None => Ok(match self.task {
                TaskKind::Simple => 0,
                TaskKind::Peripheral => 6,
            }),
            Some(name) => parse_fixation(&model, name),
        }
    }

    pub fn trial_setup(&self) -> Result<TrialSetup, ConfigError> {
        let model = self.model()?;
        let mut setup = TrialSetup::new(model, self.costs()?, self.initial_fixation_index()?);
        if let Some(prior) = &self.prior {
            if prior.len() != 3 {
                return Err(ConfigError::PriorSize);
            }
            setup.prior = BeliefState::new(prior.clone())?;
        }
        if self.trial_cap == 0 {
            return Err(ConfigError::Zero("trial_cap"));
        }
        setup.cap = self.trial_cap;
        Ok(setup)
    }
}

/// Accepts a fixation by display name (`"2"`, `"l13"`).
pub fn parse_fixation(model: &TaskModel, name: &str) -> Result<usize, ConfigError> {
    (0..model.fixations())
        .find(|&f| model.fixation_name(f) == name)
        .ok_or_else(|| ConfigError::Fixation(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_gets_defaults() {
        let cfg = EnvironmentConfig::from_json(r#"{"task":"simple","c":0.1,"betas":[0.9]}"#).unwrap();
        assert_eq!(cfg.grid_n, 200);
        assert_eq!(cfg.cs, 0.0);
        assert_eq!(cfg.initial_fixation_index().unwrap(), 0);
        cfg.validate().unwrap();

        let cfg = EnvironmentConfig::from_json(
            r#"{"task":"peripheral","c":0.05,"cs":0.005,"betas":[0.62,0.6,0.55,0.5]}"#,
        )
        .unwrap();
        assert_eq!(cfg.initial_fixation_index().unwrap(), 6);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(EnvironmentConfig::from_json(r#"{"task":"simple","c":0.1,"betas":[0.9],"x":1}"#).is_err());
        let cfg = EnvironmentConfig::from_json(r#"{"task":"simple","c":0.1,"betas":[0.9,0.8]}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::BetaCount { .. })));
        let cfg = EnvironmentConfig::from_json(r#"{"task":"simple","c":-1,"betas":[0.9]}"#).unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = EnvironmentConfig::new(TaskKind::Peripheral, 0.05, 0.0, vec![0.62, 0.6, 0.55, 0.5]);
        cfg.initial_fixation = Some("l4".into());
        assert!(matches!(cfg.validate(), Err(ConfigError::Fixation(_))));
        cfg.initial_fixation = Some("l13".into());
        assert_eq!(cfg.initial_fixation_index().unwrap(), 5);
    }
}
