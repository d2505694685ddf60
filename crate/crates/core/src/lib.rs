//! Context-dependent active sensing.
//!
//! A Bayes-risk controller for sequential visual search: the observer picks
//! where to look and when to stop, trading off time, fixation switches and
//! the chance of naming the wrong location. The crate provides
//!
//! - [`grid`]: the belief-simplex lattice and barycentric interpolation,
//! - [`observation`]: the two search tasks' observation models,
//! - [`solver`]: exact value iteration, policy extraction and a grid-free
//!   expectimax oracle,
//! - [`baselines`]: greedy-MAP and infomax controllers with threshold
//!   stopping and accuracy-matched calibration,
//! - [`approx`]: RBF and Gaussian-process approximate value iteration,
//! - [`harness`]: Monte Carlo trials, comparisons, persistence and export.

pub mod approx;
pub mod baselines;
pub mod grid;
pub mod harness;
pub mod observation;
pub mod solver;

pub use grid::{BeliefState, SimplexGrid};
pub use observation::{Observation, TaskKind, TaskModel};
pub use solver::{Action, CostParams, PolicyTable, ValueTable};
