//! Approximate value iteration with a low-dimensional value representation.
//!
//! Each iteration samples fresh belief points, backs up the Bellman equation
//! there (next-state values come from the current representation) and refits.
//! Iteration stops once predictions on a fixed probe set move by less than
//! the tolerance.

pub mod gpr;
pub mod rbf;
pub mod sampling;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::SimplexGrid;
use crate::observation::TaskModel;
use crate::solver::{stopping_value, CostParams, PolicyTable, QFactors, SolveError};

pub use gpr::{gpr_fit, gpr_fit_ard, ArdGrid, GprHyper, GprModel};
pub use rbf::{lattice_centers, rbf_fit, RbfFit, RbfModel};
pub use sampling::{sample_simplex, sample_simplex_points};

pub const DEFAULT_APPROX_TOL: f64 = 1e-4;
pub const DEFAULT_APPROX_ITERATIONS: usize = 100;
pub const DEFAULT_PROBE_POINTS: usize = 500;
const PROBE_STREAM: u64 = 0x5EED_0F_9B0BE;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("empty training set or basis")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid hyperparameters: {0}")]
    BadHyper(String),
    #[error("design matrix has effective rank {rank} (condition {condition:e})")]
    IllConditioned { rank: usize, condition: f64 },
    #[error("kernel matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("need at least {needed} samples per iteration, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    /// Carries the last iterate so its quality can still be inspected.
    #[error("approximate value iteration did not converge in {iterations} iterations (last change {change:e})")]
    NotConverged { iterations: usize, change: f64, last: Box<ApproxSolution> },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Representation {
    Rbf { centers: usize, sigma: f64 },
    Gpr { hyper: GprHyper },
    /// Hyperparameters chosen once, on the initial fit, then held fixed.
    GprArd { grid: ArdGrid },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig {
    pub representation: Representation,
    /// Fresh belief samples per iteration (`m` for RBF, `N` for GPR).
    pub samples: usize,
    pub tol: f64,
    pub max_iterations: usize,
    pub probe_points: usize,
    pub seed: u64,
    /// Draw fresh points every iteration; `false` reuses the first draw.
    pub resample: bool,
}

impl ApproxConfig {
    /// 49 unit-width bases, 1000 samples per iteration.
    pub fn rbf(seed: u64) -> Self {
        Self::with(Representation::Rbf { centers: rbf::DEFAULT_RBF_CENTERS, sigma: rbf::DEFAULT_RBF_WIDTH }, 1000, seed)
    }

    /// Unit signal and length, noise 0.1, 200 points per iteration.
    pub fn gpr(seed: u64) -> Self {
        Self::with(Representation::Gpr { hyper: GprHyper::unit(3) }, 200, seed)
    }

    pub fn gpr_ard(seed: u64) -> Self {
        Self::with(Representation::GprArd { grid: ArdGrid::standard(3) }, 200, seed)
    }

    fn with(representation: Representation, samples: usize, seed: u64) -> Self {
        Self {
            representation,
            samples,
            tol: DEFAULT_APPROX_TOL,
            max_iterations: DEFAULT_APPROX_ITERATIONS,
            probe_points: DEFAULT_PROBE_POINTS,
            seed,
            resample: true,
        }
    }
}

/// A fitted value function over `(belief, fixation)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ValueApprox {
    Rbf(RbfModel),
    /// One regression per fixation.
    Gpr { models: Vec<GprModel> },
}

impl ValueApprox {
    pub fn eval(&self, p: &[f64], fixation: usize) -> f64 {
        match self {
            ValueApprox::Rbf(m) => m.eval(p, fixation),
            ValueApprox::Gpr { models } => models[fixation].predict(p),
        }
    }

    pub fn fixations(&self) -> usize {
        match self {
            ValueApprox::Rbf(m) => m.weights.len(),
            ValueApprox::Gpr { models } => models.len(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ApproxError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| ApproxError::Io { path: path.display().to_string(), detail: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ApproxError> {
        let io = |detail: String| ApproxError::Io { path: path.display().to_string(), detail };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        Self::from_json(&text).map_err(|e| io(e.to_string()))
    }
}

/// Q-factors at `p` with continuation values read from `value`.
pub fn approx_q_factors(
    model: &TaskModel,
    costs: &CostParams,
    value: &ValueApprox,
    p: &[f64],
    fixation: usize,
) -> QFactors {
    let (stop_q, declare) = stopping_value(model, p, fixation);
    let exp = expected_next(model, value, p);
    let continue_q = exp.iter().enumerate().map(|(j, e)| costs.step(fixation, j) + e).collect();
    QFactors { stop_q, declare, continue_q }
}

/// `E_x[V(p'_x, j)]` for every fixation `j`.
fn expected_next(model: &TaskModel, value: &ValueApprox, p: &[f64]) -> Vec<f64> {
    (0..model.fixations())
        .map(|j| {
            (0..model.alphabet())
                .map(|x| match model.posterior(p, j, x) {
                    (Some(post), ev) => ev * value.eval(&post, j),
                    _ => 0.0,
                })
                .sum()
        })
        .collect()
}

/// New regression targets at each sample, laid out `[λ][sample]`.
fn backup_targets(
    model: &TaskModel,
    costs: &CostParams,
    value: Option<&ValueApprox>,
    points: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let f = model.fixations();
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|p| {
            let exp = value.map(|v| expected_next(model, v, p));
            (0..f)
                .map(|lam| {
                    let mut v = stopping_value(model, p, lam).0;
                    if let Some(exp) = &exp {
                        for (j, e) in exp.iter().enumerate() {
                            v = v.min(costs.step(lam, j) + e);
                        }
                    }
                    v
                })
                .collect()
        })
        .collect();
    (0..f).map(|lam| rows.iter().map(|r| r[lam]).collect()).collect()
}

/// Diagnostics of the most recent RBF solve (per fixation).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub rank: Vec<usize>,
    pub condition: Vec<f64>,
}

struct Fitter {
    representation: Representation,
    centers: Vec<Vec<f64>>,
    hyper: Option<Vec<GprHyper>>,
}

impl Fitter {
    fn fit(
        &mut self,
        points: &[Vec<f64>],
        targets: &[Vec<f64>],
    ) -> Result<(ValueApprox, Option<FitDiagnostics>), ApproxError> {
        match &self.representation {
            Representation::Rbf { sigma, .. } => {
                let fits = targets
                    .par_iter()
                    .map(|t| rbf_fit(&self.centers, *sigma, points, t))
                    .collect::<Result<Vec<_>, _>>()?;
                let diag = FitDiagnostics {
                    rank: fits.iter().map(|f| f.rank).collect(),
                    condition: fits.iter().map(|f| f.condition).collect(),
                };
                let model = RbfModel {
                    centers: self.centers.clone(),
                    sigma: *sigma,
                    weights: fits.into_iter().map(|f| f.weights).collect(),
                };
                Ok((ValueApprox::Rbf(model), Some(diag)))
            }
            Representation::Gpr { hyper } => {
                let models = targets
                    .par_iter()
                    .map(|t| gpr_fit(points, t, hyper))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((ValueApprox::Gpr { models }, None))
            }
            Representation::GprArd { grid } => {
                if self.hyper.is_none() {
                    let learned = targets
                        .iter()
                        .map(|t| gpr_fit_ard(points, t, grid))
                        .collect::<Result<Vec<_>, _>>()?;
                    self.hyper = Some(learned);
                }
                let hyper = self.hyper.as_ref().unwrap();
                let models = targets
                    .par_iter()
                    .zip(hyper.par_iter())
                    .map(|(t, h)| gpr_fit(points, t, h))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((ValueApprox::Gpr { models }, None))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApproxSolution {
    pub value: ValueApprox,
    pub policy: PolicyTable,
    /// Backup-and-refit rounds after the initial fit.
    pub iterations: usize,
    /// Probe-set sup-norm change of each round.
    pub changes: Vec<f64>,
    pub diagnostics: Option<FitDiagnostics>,
}

impl ApproxSolution {
    pub fn final_change(&self) -> f64 {
        self.changes.last().copied().unwrap_or(f64::INFINITY)
    }
}

fn probe_values(value: &ValueApprox, probes: &[Vec<f64>]) -> Vec<f64> {
    let f = value.fixations();
    probes.par_iter().flat_map_iter(|p| (0..f).map(move |lam| value.eval(p, lam))).collect()
}

/// Runs the sample / back up / refit loop, then extracts a policy on `grid`
/// by evaluating Q-factors through the fitted representation.
pub fn approx_value_iteration(
    model: &TaskModel,
    costs: &CostParams,
    grid: Arc<SimplexGrid>,
    config: &ApproxConfig,
) -> Result<ApproxSolution, ApproxError> {
    CostParams::new(costs.c, costs.switch_cost)?;
    if model.has_zero_likelihoods() {
        return Err(SolveError::DegenerateModel.into());
    }
    if grid.k() != model.locations() {
        return Err(SolveError::GridDimension(grid.k()).into());
    }
    if !(config.tol > 0.0) {
        return Err(SolveError::BadTolerance(config.tol).into());
    }
    let k = model.locations();
    let centers = match &config.representation {
        Representation::Rbf { centers, .. } => {
            if *centers == 0 {
                return Err(ApproxError::Empty);
            }
            if config.samples < *centers {
                return Err(ApproxError::TooFewSamples { needed: *centers, got: config.samples });
            }
            lattice_centers(k, *centers)
        }
        _ => {
            if config.samples == 0 {
                return Err(ApproxError::TooFewSamples { needed: 1, got: 0 });
            }
            Vec::new()
        }
    };
    let mut fitter = Fitter { representation: config.representation.clone(), centers, hyper: None };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let probes = sample_simplex_points(
        k,
        config.probe_points.max(1),
        &mut ChaCha8Rng::seed_from_u64(config.seed ^ PROBE_STREAM),
    );

    let points = sample_simplex_points(k, config.samples, &mut rng);
    let targets = backup_targets(model, costs, None, &points);
    let (mut value, mut diagnostics) = fitter.fit(&points, &targets)?;
    let mut before = probe_values(&value, &probes);
    let mut changes = Vec::new();
    let mut converged = false;
    while changes.len() < config.max_iterations {
        let fresh;
        let points = if config.resample {
            fresh = sample_simplex_points(k, config.samples, &mut rng);
            &fresh
        } else {
            &points
        };
        let targets = backup_targets(model, costs, Some(&value), points);
        let (next, diag) = fitter.fit(points, &targets)?;
        let after = probe_values(&next, &probes);
        let change = before.iter().zip(&after).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        changes.push(change);
        value = next;
        diagnostics = diag;
        before = after;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let f = model.fixations();
    let mut actions = vec![crate::solver::Action::Fixate(0); grid.len() * f];
    actions.par_chunks_mut(f).enumerate().for_each(|(cell, out)| {
        let p = grid.point(cell);
        for (lam, slot) in out.iter_mut().enumerate() {
            *slot = approx_q_factors(model, costs, &value, &p, lam).action(lam);
        }
    });
    let policy = PolicyTable::from_actions(grid, f, actions)?;
    let solution = ApproxSolution { value, policy, iterations: changes.len(), changes, diagnostics };
    if !converged {
        return Err(ApproxError::NotConverged {
            iterations: solution.iterations,
            change: solution.final_change(),
            last: Box::new(solution),
        });
    }
    Ok(solution)
}
