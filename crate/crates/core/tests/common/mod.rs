#![allow(dead_code)]

use std::sync::Arc;

use cdac::grid::permutations;
use cdac::solver::{q_factors, value_iteration, Action, Solution, SolveOptions};
use cdac::{CostParams, SimplexGrid, TaskModel};

pub fn solve(model: &TaskModel, c: f64, cs: f64, n: usize) -> (Arc<SimplexGrid>, Solution) {
    let grid = Arc::new(SimplexGrid::new(model.locations(), n).unwrap());
    let costs = CostParams::new(c, cs).unwrap();
    let sol = value_iteration(model, &costs, grid.clone(), SolveOptions::default()).unwrap();
    (grid, sol)
}

/// Result of relabeling every `(cell, fixation)` by every location
/// permutation.
#[derive(Debug, Default)]
pub struct SymmetryReport {
    pub max_value_gap: f64,
    pub pairs: usize,
    pub exact: usize,
    /// Mismatches where the relabeled action is tied with the chosen one.
    pub tied: usize,
    pub violations: usize,
}

fn relabel(a: Action, sigma: &[usize], fix_perm: &[usize]) -> Action {
    match a {
        Action::Stop { declare } => Action::Stop { declare: sigma[declare] },
        Action::Fixate(j) => Action::Fixate(fix_perm[j]),
    }
}

pub fn check_symmetry(model: &TaskModel, costs: &CostParams, grid: &SimplexGrid, sol: &Solution) -> SymmetryReport {
    let mut r = SymmetryReport::default();
    let f = model.fixations();
    for sigma in permutations(3) {
        let fp = model.fixation_permutation(&sigma);
        for cell in 0..grid.len() {
            let moved = grid.permute_cell(cell, &sigma).unwrap();
            for lam in 0..f {
                r.pairs += 1;
                let gap = (sol.values.get(cell, lam) - sol.values.get(moved, fp[lam])).abs();
                r.max_value_gap = r.max_value_gap.max(gap);
                let want = relabel(sol.policy.get(cell, lam), &sigma, &fp);
                let got = sol.policy.get(moved, fp[lam]);
                if want == got {
                    r.exact += 1;
                    continue;
                }
                let q = q_factors(model, costs, &sol.values, &grid.belief(moved), fp[lam]).unwrap();
                let qa = |a: Action| match a {
                    Action::Stop { .. } => q.stop_q,
                    Action::Fixate(j) => q.continue_q[j],
                };
                if (qa(want) - qa(got)).abs() <= 1e-10 {
                    r.tied += 1;
                } else {
                    r.violations += 1;
                }
            }
        }
    }
    r
}

/// Fraction of cells (fixation `lam` slice) where two action tables agree.
pub fn slice_agreement(a: impl Fn(usize) -> Action, b: impl Fn(usize) -> Action, cells: usize) -> f64 {
    (0..cells).filter(|&c| a(c) == b(c)).count() as f64 / cells as f64
}
