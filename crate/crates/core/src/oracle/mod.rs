//! Discrete mechanism design by linear programming: exact optima on small
//! grids for simultaneous, sequential and shock-observed contracting.

mod compare;
mod instance;
mod lp;
mod mechanism;
mod relaxed;
mod solve;

pub use compare::{
    compare_instance, compare_regimes, separate_selling_value, separate_selling_value_with, GapTrends, LevelResult,
    RegimeComparison,
};
pub use instance::{discretize, DiscreteInstance, GridSpec, Lineage};
pub use lp::{lp_solve, LinearProgram, LpSolution, Row, Sense};
pub use mechanism::{evaluate_mechanism, project_threshold, DiscreteMechanism, Evaluation, Regime};
pub use relaxed::{solve_relaxed, solve_relaxed_with, OrthogonalInstance, ShockLeaf};
pub use solve::{
    solve_sequential, solve_sequential_with, solve_simultaneous, solve_simultaneous_with, CutRecord, OracleOptions,
    SolveReport,
};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("lp solver: {0}")]
    Solver(String),
    #[error("no convergence after {rounds} rounds (violation {violation:e})")]
    NonConvergence { rounds: usize, violation: f64 },
    #[error("degenerate cell: {0}")]
    DegenerateCell(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
