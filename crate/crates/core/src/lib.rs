//! Dynamic programming for finite-horizon optimal control on a tree of
//! reachable states.
//!
//! Instead of a spatial grid, the state space is sampled by following the
//! discretized dynamics from the initial condition under every discrete
//! control. Nodes that land within a tolerance of an existing node are merged,
//! which keeps the tree tractable. The discrete Bellman recursion is then
//! solved backward on the tree and the optimal feedback is read off by
//! descending it along the stored minimizers.
//!
//! The crate also ships the reference solvers used to validate the method: a
//! semi-Lagrangian grid scheme for low dimensions, a closed-form value function
//! and an exhaustive enumeration of control sequences.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builder;
pub mod controls;
pub mod dp;
pub mod error;
pub mod experiment;
pub mod feedback;
pub mod io;
pub mod metrics;
pub mod neighbor;
pub mod oracle;
pub mod problem;
pub mod problems;
pub mod stepper;
pub mod time;
pub mod trajectory;
pub mod tree;
pub mod value;

pub use builder::{build_tree, BuiltTree, LevelStats, PruneConfig, PruneScope};
pub use controls::ControlGrid;
pub use error::{Result, TsaError};
pub use experiment::{run_benchmark, solve_for_tree, Solution};
pub use neighbor::{NeighborIndex, NeighborStrategy};
pub use problem::{OcProblem, StateNorm};
pub use stepper::{ExplicitEuler, ImplicitEuler, Stepper};
pub use time::TimeGrid;
pub use trajectory::Trajectory;
pub use tree::{NodeRef, Tree};
pub use value::{Coverage, ValueTable};
