//! Regular trees: finite builders and experiments, and the infinite tree with
//! lazily materialized rotors.

mod config;
mod finite;
mod lazy;

use thiserror::Error;

use crate::graph::GraphError;
use crate::walk::WalkError;

pub use config::{Address, LazyTreeConfig, LevelRule, OverrideRule, RayRule};
pub use finite::{
    address_name, alternation_experiment, ball_size, build_tree, exit_measure_experiment,
    expected_returns, hitting_function, hitting_probabilities, modified_ball_count,
    random_acyclic_wired, recurrence_experiment, root_order, translate_rotors, uniform_rotors,
    AlternationOutcome, BranchRun, ExitMeasureOutcome, HittingProbabilities, RecurrenceOutcome,
    TreeSpec, TreeVariant, BOUNDARY, ORIGIN, ROOT, WIRED_SINK,
};
pub use lazy::{
    aggregate, aggregate_modified, escape_bits, run_chips_infinite, sphere_size, AggregationRun,
    AggregationState, Arena, BallCheck, ChipOutcome, LazyTree, ModifiedRun,
};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("bad parameters: {0}")]
    BadParameters(String),
    #[error("rotor configuration is not acyclic: {0}")]
    NotAcyclic(String),
    #[error("invalid tree configuration: {0}")]
    InvalidConfig(String),
    #[error("step budget of {0} exceeded")]
    StepBudgetExceeded(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Walk(#[from] WalkError),
}
