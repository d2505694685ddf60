//! Side-by-side evaluation of C-DAC against accuracy-matched baselines.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::baselines::{
    calibrate_threshold, infomax_solve_with, BaselineError, ContinuationRule, InfomaxConfig,
};
use crate::grid::{GridError, SimplexGrid};
use crate::solver::{value_iteration_with, Solution, SolveError, Transitions};

use super::config::{ConfigError, EnvironmentConfig};
use super::stats::{run_batch, TrialStats};
use super::trial::TableController;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyRow {
    pub name: String,
    /// Stopping threshold; `None` for C-DAC.
    pub threshold: Option<f64>,
    pub stats: TrialStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub config: EnvironmentConfig,
    pub sweeps: usize,
    pub rows: Vec<PolicyRow>,
}

impl ComparisonReport {
    pub fn row(&self, name: &str) -> Option<&PolicyRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Aligned table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(
            out,
            "task={:?} c={} cs={} betas={:?} grid_n={} trials={} seed={}",
            c.task, c.c, c.cs, c.betas, c.grid_n, c.trials, c.seed
        );
        let _ = writeln!(
            out,
            "{:<10} {:>9} {:>17} {:>17} {:>17} {:>17} {:>7}",
            "policy", "threshold", "accuracy", "steps", "switches", "total cost", "capped"
        );
        for r in &self.rows {
            let s = &r.stats;
            let th = r.threshold.map_or("-".to_string(), |t| format!("{t:.4}"));
            let cell = |e: &super::stats::Estimate| format!("{:.4} ± {:.4}", e.mean, e.se());
            let _ = writeln!(
                out,
                "{:<10} {:>9} {:>17} {:>17} {:>17} {:>17} {:>7}",
                r.name,
                th,
                cell(&s.accuracy),
                cell(&s.steps),
                cell(&s.switches),
                cell(&s.total_cost),
                s.capped
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "policy,threshold,n_trials,seed,accuracy,accuracy_se,steps,steps_se,switches,switches_se,total_cost,total_cost_se,capped\n",
        );
        for r in &self.rows {
            let s = &r.stats;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.name,
                r.threshold.map_or(String::new(), |t| t.to_string()),
                s.n_trials,
                s.seed,
                s.accuracy.mean,
                s.accuracy.se(),
                s.steps.mean,
                s.steps.se(),
                s.switches.mean,
                s.switches.se(),
                s.total_cost.mean,
                s.total_cost.se(),
                s.capped
            );
        }
        out
    }
}

/// Solves C-DAC, simulates it, then calibrates each baseline's threshold to
/// C-DAC's accuracy with the same seed and trial count.
pub fn compare_policies(env: &EnvironmentConfig) -> Result<ComparisonReport, CompareError> {
    env.validate()?;
    let model = env.model()?;
    let costs = env.costs()?;
    let setup = env.trial_setup()?;
    let grid = Arc::new(SimplexGrid::new(model.locations(), env.grid_n)?);
    let transitions = Transitions::new(&model, grid)?;
    let solution: Solution = value_iteration_with(&model, &costs, &transitions, env.solve_options())?;

    let cdac = run_batch(&TableController { policy: &solution.policy }, &setup, env.trials, env.seed);
    let target = cdac.accuracy.mean;
    let mut rows = vec![PolicyRow { name: "c-dac".into(), threshold: None, stats: cdac }];

    let infomax = infomax_solve_with(&transitions, InfomaxConfig { horizon: env.infomax_horizon })?;
    let mut rules = vec![ContinuationRule::Infomax(Arc::new(infomax))];
    if env.include_greedy {
        rules.push(ContinuationRule::GreedyMap);
    }
    for rule in rules {
        let cal = calibrate_threshold(&setup, &rule, target, env.trials, env.seed)?;
        rows.push(PolicyRow { name: rule.name().into(), threshold: Some(cal.theta), stats: cal.stats });
    }
    Ok(ComparisonReport { config: env.clone(), sweeps: solution.sweeps, rows })
}
