mod common;

use std::sync::Arc;

use cdac::solver::{
    expectimax_oracle, value_iteration, Action, SolveOptions, Transitions,
};
use cdac::{BeliefState, CostParams, SimplexGrid, TaskModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{check_symmetry, solve};

#[test]
fn simple_task_commutes_with_relabeling() {
    let model = TaskModel::simple(0.9).unwrap();
    for cs in [0.0, 0.1] {
        let (grid, sol) = solve(&model, 0.1, cs, 60);
        let r = check_symmetry(&model, &CostParams::new(0.1, cs).unwrap(), &grid, &sol);
        assert!(r.max_value_gap <= 1e-12, "{r:?}");
        assert_eq!(r.violations, 0, "{r:?}");
    }
}

#[test]
fn peripheral_task_commutes_with_automorphisms() {
    let model = TaskModel::peripheral([0.62, 0.6, 0.55, 0.5]).unwrap();
    let (grid, sol) = solve(&model, 0.05, 0.005, 40);
    let r = check_symmetry(&model, &CostParams::new(0.05, 0.005).unwrap(), &grid, &sol);
    assert!(r.max_value_gap <= 1e-12, "{r:?}");
    assert_eq!(r.violations, 0, "{r:?}");
}

#[test]
fn sweeps_are_monotone_and_bounded() {
    for (model, c, cs) in [
        (TaskModel::simple(0.9).unwrap(), 0.1, 0.0),
        (TaskModel::simple(0.7).unwrap(), 0.05, 0.2),
        (TaskModel::peripheral([0.62, 0.6, 0.55, 0.5]).unwrap(), 0.05, 0.0),
    ] {
        let (grid, sol) = solve(&model, c, cs, 50);
        assert!(sol.max_increase <= 0.0, "{}", sol.max_increase);
        for cell in 0..grid.len() {
            let p = grid.point(cell);
            for lam in 0..model.fixations() {
                let v = sol.values.get(cell, lam);
                let stop = cdac::solver::stopping_value(&model, &p, lam).0;
                assert!(v >= 0.0 && v <= stop, "cell {cell} fixation {lam}: {v} vs {stop}");
            }
        }
    }
}

#[test]
fn grid_values_sit_below_the_oracle() {
    let model = TaskModel::simple(0.9).unwrap();
    let costs = CostParams::new(0.1, 0.0).unwrap();
    let (grid, sol) = solve(&model, 0.1, 0.0, 60);
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..40 {
        let cell = rng.gen_range(0..grid.len());
        let lam = rng.gen_range(0..3);
        let p = grid.belief(cell);
        let oracle = expectimax_oracle(&model, &costs, &p, lam, 4).unwrap();
        assert!(sol.values.get(cell, lam) <= oracle + 5e-3);
    }
}

#[test]
fn stopping_regions_nest() {
    let model = TaskModel::simple(0.9).unwrap();
    let n = 80;
    let (grid, low_c) = solve(&model, 0.1, 0.0, n);
    let (_, high_c) = solve(&model, 0.2, 0.0, n);
    let pairs = grid.len() * 3;
    let escaped = (0..pairs)
        .filter(|&i| low_c.policy.as_slice()[i].is_stop() && !high_c.policy.as_slice()[i].is_stop())
        .count();
    assert!(escaped as f64 <= 1e-3 * pairs as f64, "{escaped}");

    let (_, noisy) = solve(&TaskModel::simple(0.7).unwrap(), 0.1, 0.0, n);
    assert!(noisy.policy.stop_count() > low_c.policy.stop_count());

    let switches = |sol: &cdac::solver::Solution| {
        (0..grid.len())
            .flat_map(|c| (0..3).map(move |l| (c, l)))
            .filter(|&(c, l)| matches!(sol.policy.get(c, l), Action::Fixate(j) if j != l))
            .count()
    };
    let (_, costly) = solve(&model, 0.1, 0.1, n);
    assert!(switches(&costly) < switches(&low_c));
}

#[test]
fn shared_transitions_give_identical_solutions() {
    let model = TaskModel::simple(0.8).unwrap();
    let grid = Arc::new(SimplexGrid::new(3, 40).unwrap());
    let costs = CostParams::new(0.1, 0.05).unwrap();
    let a = value_iteration(&model, &costs, grid.clone(), SolveOptions::default()).unwrap();
    let t = Transitions::new(&model, grid).unwrap();
    let b = cdac::solver::value_iteration_with(&model, &costs, &t, SolveOptions::default()).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.policy, b.policy);
    let uniform = BeliefState::uniform(3);
    assert!(a.values.interpolate(uniform.probs(), 0).unwrap() <= 2.0 / 3.0);
}
