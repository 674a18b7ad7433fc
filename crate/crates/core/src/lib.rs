//! Sparse partial-correlation graphs learned without tuning parameters,
//! and prediction of unobserved nodes from the learned graph.
//!
//! Each node is regressed on all others with a square-root Lasso whose
//! per-column penalty is `‖x_j‖₂ / √N`, so the noise level of every node
//! is accommodated without cross-validation. See [`solver`] for the
//! learner, [`baselines`] for least squares and kernel reference graphs
//! and [`eval`] for the Monte Carlo harness.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod solver;
pub mod stats;
pub mod truth;

pub use error::{Error, Result};
pub use graph::{validate_graph, Dataset, NodeSplit, WeightedGraph};
pub use solver::{
    coordinate_update, spice_learn_graph, spice_solve_node, sqrt_lasso_objective, OnlineSpice, SolverConfig,
};
pub use stats::SuffStats;
