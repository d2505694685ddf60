//! Single search trials and seeded batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::grid::BeliefState;
use crate::observation::{Observation, StopRule, TaskModel};
use crate::solver::{stopping_value, Action, CostParams, PolicyTable};

/// Random stream owned by one trial.
pub type TrialRng = ChaCha8Rng;

pub const DEFAULT_TRIAL_CAP: usize = 300;

/// Anything that can pick the next action from `(belief, fixation)`.
pub trait Controller: Sync {
    fn decide(&self, belief: &BeliefState, fixation: usize, rng: &mut TrialRng) -> Action;
}

/// Follows a solved policy table (nearest-cell lookup).
pub struct TableController<'a> {
    pub policy: &'a PolicyTable,
}

impl Controller for TableController<'_> {
    fn decide(&self, belief: &BeliefState, fixation: usize, _rng: &mut TrialRng) -> Action {
        self.policy.action_unchecked(belief.probs(), fixation)
    }
}

/// Declares immediately under the task's stop rule.
pub struct AlwaysStop {
    pub rule: StopRule,
}

impl Controller for AlwaysStop {
    fn decide(&self, belief: &BeliefState, fixation: usize, _rng: &mut TrialRng) -> Action {
        let declare = match self.rule {
            StopRule::FixatedLocation => fixation,
            StopRule::MostLikely => belief.argmax(),
        };
        Action::Stop { declare }
    }
}

/// Everything a trial needs besides the controller.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    /// Model used for belief updates and stopping costs.
    pub model: TaskModel,
    /// Model that generates observations; defaults to `model`.
    pub generative: Option<TaskModel>,
    pub costs: CostParams,
    pub prior: BeliefState,
    pub initial_fixation: usize,
    pub cap: usize,
}

impl TrialSetup {
    pub fn new(model: TaskModel, costs: CostParams, initial_fixation: usize) -> Self {
        let prior = BeliefState::uniform(model.locations());
        Self { model, generative: None, costs, prior, initial_fixation, cap: DEFAULT_TRIAL_CAP }
    }
}

/// Outcome of one trial. `switches` counts every change of fixation,
/// including a move away from the initial fixation before the first
/// observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub steps: usize,
    pub switches: usize,
    pub declared: usize,
    pub target: usize,
    pub correct: bool,
    pub capped: bool,
    pub total_cost: f64,
}

impl TrialRecord {
    pub fn recompute_cost(&self, costs: &CostParams) -> f64 {
        costs.c * self.steps as f64
            + costs.switch_cost * self.switches as f64
            + if self.correct { 0.0 } else { 1.0 }
    }
}

/// One observation step of a traced trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub fixation: usize,
    pub observation: Observation,
    pub belief: BeliefState,
}

pub fn run_trial(
    controller: &dyn Controller,
    setup: &TrialSetup,
    target: usize,
    seed: u64,
) -> TrialRecord {
    let mut rng = TrialRng::seed_from_u64(seed);
    simulate(controller, setup, target, &mut rng, None)
}

pub fn run_trial_traced(
    controller: &dyn Controller,
    setup: &TrialSetup,
    target: usize,
    seed: u64,
) -> (TrialRecord, Vec<TraceStep>) {
    let mut rng = TrialRng::seed_from_u64(seed);
    let mut trace = Vec::new();
    let rec = simulate(controller, setup, target, &mut rng, Some(&mut trace));
    (rec, trace)
}

fn simulate(
    controller: &dyn Controller,
    setup: &TrialSetup,
    target: usize,
    rng: &mut TrialRng,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> TrialRecord {
    let generative = setup.generative.as_ref().unwrap_or(&setup.model);
    let mut belief = setup.prior.clone();
    let mut fixation = setup.initial_fixation;
    let mut steps = 0;
    let mut switches = 0;
    let finish = |steps: usize, switches: usize, declared: usize, capped: bool| {
        let correct = !capped && declared == target;
        let rec = TrialRecord {
            steps,
            switches,
            declared,
            target,
            correct,
            capped,
            total_cost: 0.0,
        };
        TrialRecord { total_cost: rec.recompute_cost(&setup.costs), ..rec }
    };
    loop {
        if steps >= setup.cap {
            let declared = stopping_value(&setup.model, belief.probs(), fixation).1;
            return finish(steps, switches, declared, true);
        }
        match controller.decide(&belief, fixation, rng) {
            Action::Stop { declare } => return finish(steps, switches, declare, false),
            Action::Fixate(j) => {
                if j != fixation {
                    switches += 1;
                    fixation = j;
                }
                let x = generative
                    .sample_observation(target, fixation, rng)
                    .expect("controller returned a valid fixation");
                steps += 1;
                belief = match setup.model.bayes_update(&belief, fixation, x) {
                    Ok(b) => b,
                    // Inference model rules the observation out: the belief
                    // cannot move, so stop with what we have.
                    Err(_) => {
                        let declared = stopping_value(&setup.model, belief.probs(), fixation).1;
                        return finish(steps, switches, declared, false);
                    }
                };
                if let Some(t) = trace.as_deref_mut() {
                    t.push(TraceStep { fixation, observation: x, belief: belief.clone() });
                }
            }
        }
    }
}

/// Seed of trial `index` in a batch, via SplitMix64.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `n_trials` trials with uniformly drawn targets, in parallel, returned
/// in trial order.
pub fn run_records(
    controller: &dyn Controller,
    setup: &TrialSetup,
    n_trials: usize,
    master_seed: u64,
) -> Vec<TrialRecord> {
    let k = setup.model.locations();
    (0..n_trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = TrialRng::seed_from_u64(trial_seed(master_seed, i));
            let target = rng.gen_range(0..k);
            simulate(controller, setup, target, &mut rng, None)
        })
        .collect()
}
