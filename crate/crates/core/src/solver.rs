//! Exact Bayes-risk controller on the belief grid.
//!
//! The value of a belief `p` with the sensor at fixation `λ` is the residual
//! expected cost of acting optimally from there:
//!
//! ```text
//! V(p, λ) = min( stop(p, λ),  min_j  c + c_s·1{j≠λ} + Σ_x P(x | p, j) V(p'_x, j) )
//! ```
//!
//! where `stop(p, λ)` is the error probability of the best available
//! declaration. Costs already paid are sunk, so the table is stationary.
//! Value iteration starts from the stopping costs and applies the backup with
//! synchronous sweeps until the sup-norm change drops below the tolerance.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{BeliefState, GridError, SimplexGrid};
use crate::observation::{ModelError, StopRule, TaskModel, LOCATIONS};

/// Q-factors closer than this are treated as tied.
pub const TIE_EPS: f64 = 1e-12;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_SWEEPS: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("time cost must be positive and switch cost nonnegative (c = {c}, c_s = {switch_cost})")]
    BadCosts { c: f64, switch_cost: f64 },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("value iteration did not converge: change {change:e} after {sweeps} sweeps")]
    NotConverged { sweeps: usize, change: f64 },
    #[error("model has zero-probability observations; the belief update is ill-posed")]
    DegenerateModel,
    #[error("grid has k = {0}; the task models have 3 locations")]
    GridDimension(usize),
    #[error("horizon {horizon} exceeds the cap of {cap} for this task")]
    HorizonTooLong { horizon: usize, cap: usize },
    #[error("table shape does not match: {0}")]
    Shape(String),
}

/// Per-step time cost `c` and per-switch cost `c_s`; errors cost 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostParams {
    pub c: f64,
    pub switch_cost: f64,
}

impl CostParams {
    pub fn new(c: f64, switch_cost: f64) -> Result<Self, SolveError> {
        if !(c > 0.0 && c.is_finite() && switch_cost >= 0.0 && switch_cost.is_finite()) {
            return Err(SolveError::BadCosts { c, switch_cost });
        }
        Ok(Self { c, switch_cost })
    }

    #[inline]
    pub fn step(&self, from: usize, to: usize) -> f64 {
        if from == to {
            self.c
        } else {
            self.c + self.switch_cost
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Stop { declare: usize },
    Fixate(usize),
}

impl Action {
    pub fn is_stop(self) -> bool {
        matches!(self, Action::Stop { .. })
    }

    /// Stable integer code: `0..k` stop-and-declare, `k + j` fixate `j`.
    pub fn code(self) -> u8 {
        match self {
            Action::Stop { declare } => declare as u8,
            Action::Fixate(j) => (LOCATIONS + j) as u8,
        }
    }

    pub fn from_code(code: u8) -> Self {
        let code = code as usize;
        if code < LOCATIONS {
            Action::Stop { declare: code }
        } else {
            Action::Fixate(code - LOCATIONS)
        }
    }
}

/// Cost and declaration of the best stop available at `(p, fixation)`.
pub fn stopping_value(model: &TaskModel, p: &[f64], fixation: usize) -> (f64, usize) {
    match model.stop_rule() {
        StopRule::FixatedLocation => (1.0 - p[fixation], fixation),
        StopRule::MostLikely => {
            let mut best = 0;
            for i in 1..p.len() {
                if p[i] > p[best] {
                    best = i;
                }
            }
            (1.0 - p[best], best)
        }
    }
}

/// Stop and continuation Q-factors at one `(belief, fixation)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QFactors {
    pub stop_q: f64,
    pub declare: usize,
    pub continue_q: Vec<f64>,
}

impl QFactors {
    /// Deterministic choice: stop wins ties, then staying, then the lowest
    /// fixation index.
    pub fn action(&self, fixation: usize) -> Action {
        let j = best_continuation(&self.continue_q, fixation);
        if self.stop_q <= self.continue_q[j] + TIE_EPS {
            Action::Stop { declare: self.declare }
        } else {
            Action::Fixate(j)
        }
    }

    pub fn value(&self) -> f64 {
        self.continue_q.iter().fold(self.stop_q, |m, &q| m.min(q))
    }
}

pub(crate) fn best_continuation(q: &[f64], stay: usize) -> usize {
    let min = q.iter().cloned().fold(f64::INFINITY, f64::min);
    if q[stay] <= min + TIE_EPS {
        return stay;
    }
    q.iter().position(|&v| v <= min + TIE_EPS).unwrap()
}

/// One reachable observation outcome from a grid cell.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Branch {
    pub prob: f64,
    pub entropy: f64,
    pub idx: [u32; LOCATIONS],
    pub w: [f64; LOCATIONS],
}

impl Branch {
    #[inline]
    pub fn gather(&self, values: &[f64], stride: usize, offset: usize) -> f64 {
        let mut acc = 0.0;
        for t in 0..LOCATIONS {
            acc += self.w[t] * values[self.idx[t] as usize * stride + offset];
        }
        acc
    }
}

/// Posterior stencils for every `(cell, fixation, observation)`; independent
/// of costs, so one table serves every solve on the same model and grid.
#[derive(Debug, Clone)]
pub struct Transitions {
    grid: Arc<SimplexGrid>,
    fixations: usize,
    offsets: Vec<u32>,
    branches: Vec<Branch>,
}

pub(crate) fn entropy_of(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

impl Transitions {
    pub fn new(model: &TaskModel, grid: Arc<SimplexGrid>) -> Result<Self, SolveError> {
        if grid.k() != LOCATIONS {
            return Err(SolveError::GridDimension(grid.k()));
        }
        let fixations = model.fixations();
        let per_cell: Vec<Vec<(usize, Branch)>> = (0..grid.len())
            .into_par_iter()
            .map(|cell| {
                let p = grid.point(cell);
                let mut out = Vec::with_capacity(fixations * model.alphabet());
                for j in 0..fixations {
                    for x in 0..model.alphabet() {
                        let (post, prob) = model.posterior(&p, j, x);
                        let Some(post) = post else { continue };
                        let bw = grid.locate_normalized(&post);
                        let mut b = Branch {
                            prob,
                            entropy: entropy_of(&post),
                            idx: [0; LOCATIONS],
                            w: [0.0; LOCATIONS],
                        };
                        for (t, (&i, &w)) in bw.indices.iter().zip(&bw.weights).enumerate() {
                            b.idx[t] = i as u32;
                            b.w[t] = w;
                        }
                        out.push((j, b));
                    }
                }
                out
            })
            .collect();
        let mut offsets = Vec::with_capacity(grid.len() * fixations + 1);
        let mut branches = Vec::new();
        offsets.push(0);
        for cell in per_cell {
            let mut it = cell.into_iter().peekable();
            for j in 0..fixations {
                while let Some((_, b)) = it.next_if(|(jj, _)| *jj == j) {
                    branches.push(b);
                }
                offsets.push(branches.len() as u32);
            }
        }
        Ok(Self { grid, fixations, offsets, branches })
    }

    pub fn grid(&self) -> &Arc<SimplexGrid> {
        &self.grid
    }

    pub fn fixations(&self) -> usize {
        self.fixations
    }

    #[inline]
    pub(crate) fn branches(&self, cell: usize, j: usize) -> &[Branch] {
        let o = cell * self.fixations + j;
        &self.branches[self.offsets[o] as usize..self.offsets[o + 1] as usize]
    }

    /// `Σ_x P(x) V(p'_x, j)` for every continuation `j` at `cell`.
    #[inline]
    pub(crate) fn expectations(&self, values: &[f64], cell: usize, out: &mut [f64]) {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self
                .branches(cell, j)
                .iter()
                .map(|b| b.prob * b.gather(values, self.fixations, j))
                .sum();
        }
    }
}

/// Values per `(cell, fixation)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    grid: Arc<SimplexGrid>,
    fixations: usize,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn from_values(
        grid: Arc<SimplexGrid>,
        fixations: usize,
        values: Vec<f64>,
    ) -> Result<Self, SolveError> {
        if values.len() != grid.len() * fixations {
            return Err(SolveError::Shape(format!(
                "{} values for {} cells x {} fixations",
                values.len(),
                grid.len(),
                fixations
            )));
        }
        Ok(Self { grid, fixations, values })
    }

    /// Immediate-stop costs: the initial guess for value iteration.
    pub fn stopping_costs(model: &TaskModel, grid: Arc<SimplexGrid>) -> Self {
        let fixations = model.fixations();
        let mut values = Vec::with_capacity(grid.len() * fixations);
        for cell in 0..grid.len() {
            let p = grid.point(cell);
            for f in 0..fixations {
                values.push(stopping_value(model, &p, f).0);
            }
        }
        Self { grid, fixations, values }
    }

    pub fn grid(&self) -> &Arc<SimplexGrid> {
        &self.grid
    }

    pub fn fixations(&self) -> usize {
        self.fixations
    }

    pub fn get(&self, cell: usize, fixation: usize) -> f64 {
        self.values[cell * self.fixations + fixation]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Values of one fixation across all cells.
    pub fn column(&self, fixation: usize) -> Vec<f64> {
        self.values.iter().skip(fixation).step_by(self.fixations).copied().collect()
    }

    /// Barycentric interpolation of `V(., fixation)` at `p`.
    pub fn interpolate(&self, p: &[f64], fixation: usize) -> Result<f64, GridError> {
        let w = self.grid.locate(p)?;
        Ok(w.indices
            .iter()
            .zip(&w.weights)
            .map(|(&i, &wi)| wi * self.get(i, fixation))
            .sum())
    }
}

/// Actions per `(cell, fixation)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    grid: Arc<SimplexGrid>,
    fixations: usize,
    actions: Vec<Action>,
}

impl PolicyTable {
    pub fn from_actions(
        grid: Arc<SimplexGrid>,
        fixations: usize,
        actions: Vec<Action>,
    ) -> Result<Self, SolveError> {
        if actions.len() != grid.len() * fixations {
            return Err(SolveError::Shape(format!(
                "{} actions for {} cells x {} fixations",
                actions.len(),
                grid.len(),
                fixations
            )));
        }
        Ok(Self { grid, fixations, actions })
    }

    pub fn grid(&self) -> &Arc<SimplexGrid> {
        &self.grid
    }

    pub fn fixations(&self) -> usize {
        self.fixations
    }

    pub fn get(&self, cell: usize, fixation: usize) -> Action {
        self.actions[cell * self.fixations + fixation]
    }

    pub fn as_slice(&self) -> &[Action] {
        &self.actions
    }

    /// Action stored at the lattice cell nearest to `p`.
    pub fn action(&self, p: &BeliefState, fixation: usize) -> Result<Action, GridError> {
        let cell = self.grid.nearest_cell(p.probs())?;
        Ok(self.get(cell, fixation))
    }

    pub(crate) fn action_unchecked(&self, p: &[f64], fixation: usize) -> Action {
        self.get(self.grid.nearest_normalized(p), fixation)
    }

    /// Cells (per fixation) whose action stops.
    pub fn stop_count(&self) -> usize {
        self.actions.iter().filter(|a| a.is_stop()).count()
    }
}

/// Expected cost of fixating `next` from `(p, current)` and then following
/// `values`, computed directly from Bayes updates and interpolation.
pub fn continuation_value(
    model: &TaskModel,
    costs: &CostParams,
    values: &ValueTable,
    p: &BeliefState,
    current: usize,
    next: usize,
) -> Result<f64, SolveError> {
    let pred = model.predictive(p, next)?;
    let mut acc = 0.0;
    for (x, &px) in pred.iter().enumerate() {
        if px <= 0.0 {
            continue;
        }
        let (post, _) = model.posterior(p.probs(), next, x);
        let post = post.expect("positive evidence");
        acc += px * values.interpolate(&post, next)?;
    }
    Ok(costs.step(current, next) + acc)
}

/// All Q-factors at an arbitrary belief.
pub fn q_factors(
    model: &TaskModel,
    costs: &CostParams,
    values: &ValueTable,
    p: &BeliefState,
    fixation: usize,
) -> Result<QFactors, SolveError> {
    let (stop_q, declare) = stopping_value(model, p.probs(), fixation);
    let continue_q = (0..model.fixations())
        .map(|j| continuation_value(model, costs, values, p, fixation, j))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QFactors { stop_q, declare, continue_q })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_sweeps: DEFAULT_MAX_SWEEPS }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub values: ValueTable,
    pub policy: PolicyTable,
    pub sweeps: usize,
    pub final_change: f64,
    /// Largest single-entry increase seen in any sweep; never positive when
    /// the sweeps are monotone.
    pub max_increase: f64,
}

fn validate_model(model: &TaskModel) -> Result<(), SolveError> {
    if model.has_zero_likelihoods() {
        return Err(SolveError::DegenerateModel);
    }
    Ok(())
}

/// Value iteration from the stopping costs.
pub fn value_iteration(
    model: &TaskModel,
    costs: &CostParams,
    grid: Arc<SimplexGrid>,
    opts: SolveOptions,
) -> Result<Solution, SolveError> {
    validate_model(model)?;
    let transitions = Transitions::new(model, grid)?;
    value_iteration_with(model, costs, &transitions, opts)
}

/// Value iteration reusing precomputed transitions.
pub fn value_iteration_with(
    model: &TaskModel,
    costs: &CostParams,
    transitions: &Transitions,
    opts: SolveOptions,
) -> Result<Solution, SolveError> {
    validate_model(model)?;
    CostParams::new(costs.c, costs.switch_cost)?;
    if !(opts.tol > 0.0) {
        return Err(SolveError::BadTolerance(opts.tol));
    }
    let grid = transitions.grid().clone();
    let f = model.fixations();
    let stop = ValueTable::stopping_costs(model, grid.clone());
    let mut current = stop.values.clone();
    let mut next = vec![0.0; current.len()];
    let mut max_increase = f64::NEG_INFINITY;
    let mut sweeps = 0;
    let mut change = f64::INFINITY;

    while sweeps < opts.max_sweeps {
        let prev = &current;
        next.par_chunks_mut(f).enumerate().for_each(|(cell, out)| {
            let mut exp = vec![0.0; f];
            transitions.expectations(prev, cell, &mut exp);
            for (lam, slot) in out.iter_mut().enumerate() {
                let mut v = stop.values[cell * f + lam];
                for (j, e) in exp.iter().enumerate() {
                    v = v.min(costs.step(lam, j) + e);
                }
                *slot = v;
            }
        });
        sweeps += 1;
        let (delta, up) = current
            .par_iter()
            .zip(next.par_iter())
            .map(|(a, b)| ((b - a).abs(), b - a))
            .reduce(|| (0.0, f64::NEG_INFINITY), |x, y| (x.0.max(y.0), x.1.max(y.1)));
        change = delta;
        max_increase = max_increase.max(up);
        std::mem::swap(&mut current, &mut next);
        if change < opts.tol {
            break;
        }
    }
    if change >= opts.tol {
        return Err(SolveError::NotConverged { sweeps, change });
    }
    let values = ValueTable { grid: grid.clone(), fixations: f, values: current };
    let policy = extract_policy(model, costs, transitions, &values);
    Ok(Solution { values, policy, sweeps, final_change: change, max_increase })
}

/// Greedy policy with respect to a value table, evaluated on every cell.
pub fn extract_policy(
    model: &TaskModel,
    costs: &CostParams,
    transitions: &Transitions,
    values: &ValueTable,
) -> PolicyTable {
    let grid = transitions.grid().clone();
    let f = model.fixations();
    let mut actions = vec![Action::Fixate(0); grid.len() * f];
    actions.par_chunks_mut(f).enumerate().for_each(|(cell, out)| {
        let p = grid.point(cell);
        let mut exp = vec![0.0; f];
        transitions.expectations(&values.values, cell, &mut exp);
        for (lam, slot) in out.iter_mut().enumerate() {
            let (stop_q, declare) = stopping_value(model, &p, lam);
            let continue_q: Vec<f64> =
                exp.iter().enumerate().map(|(j, e)| costs.step(lam, j) + e).collect();
            *slot = QFactors { stop_q, declare, continue_q }.action(lam);
        }
    });
    PolicyTable { grid, fixations: f, actions }
}

/// Longest horizon the exhaustive oracle accepts for a model.
pub fn oracle_horizon_cap(model: &TaskModel) -> usize {
    match model.stop_rule() {
        StopRule::FixatedLocation => 5,
        StopRule::MostLikely => 3,
    }
}

/// Exact optimal cost over strategies that must stop within `horizon` more
/// observations. No grid, no interpolation.
pub fn expectimax_oracle(
    model: &TaskModel,
    costs: &CostParams,
    p: &BeliefState,
    fixation: usize,
    horizon: usize,
) -> Result<f64, SolveError> {
    let cap = oracle_horizon_cap(model);
    if horizon > cap {
        return Err(SolveError::HorizonTooLong { horizon, cap });
    }
    if fixation >= model.fixations() {
        return Err(ModelError::BadFixation(fixation).into());
    }
    Ok(expand(model, costs, p.probs(), fixation, horizon))
}

fn expand(model: &TaskModel, costs: &CostParams, p: &[f64], fixation: usize, depth: usize) -> f64 {
    let (mut best, _) = stopping_value(model, p, fixation);
    if depth == 0 {
        return best;
    }
    for j in 0..model.fixations() {
        let mut q = costs.step(fixation, j);
        for x in 0..model.alphabet() {
            let (post, prob) = model.posterior(p, j, x);
            if let Some(post) = post {
                q += prob * expand(model, costs, &post, j, depth - 1);
            }
        }
        best = best.min(q);
    }
    best
}
