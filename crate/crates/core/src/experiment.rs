//! Build, solve and evaluate a benchmark in one call.

use std::time::Instant;

use crate::builder::{build_tree, BuiltTree, PruneConfig};
use crate::dp::{solve_value, solve_value_autonomous};
use crate::error::Result;
use crate::feedback::{constant_sequence, control_sequence, evaluate_cost, synthesize_trajectory, CostEvaluation};
use crate::problems::{Benchmark, Scheme};
use crate::stepper::{ExplicitEuler, ImplicitEuler, Stepper};
use crate::time::TimeGrid;
use crate::trajectory::Trajectory;
use crate::tree::Tree;
use crate::value::ValueTable;

impl Benchmark {
    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_step(0.0, self.horizon, self.dt)
    }

    pub fn stepper(&self) -> Result<Box<dyn Stepper>> {
        Ok(match self.scheme {
            Scheme::Explicit => Box::new(ExplicitEuler::new(&self.problem, self.dt)),
            Scheme::Implicit => Box::new(ImplicitEuler::for_problem(&self.problem, self.dt)?),
        })
    }

    /// Pruning settings implied by the benchmark defaults.
    pub fn prune_config(&self) -> PruneConfig {
        PruneConfig::with_tolerance(self.tolerance.resolve(self.dt)).scope(self.scope)
    }
}

/// Native values for same-level trees, the extended table when the tree has
/// cross-level edges.
pub fn solve_for_tree(
    tree: &Tree,
    problem: &crate::problem::OcProblem,
    grid: &TimeGrid,
    controls: &crate::controls::ControlGrid,
) -> Result<ValueTable> {
    if tree.has_cross_level_edges() {
        solve_value_autonomous(tree, problem, grid, controls)
    } else {
        solve_value(tree, problem, grid, controls)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub built: BuiltTree,
    pub values: ValueTable,
    pub trajectory: Trajectory,
    /// The synthesized controls replayed through the stepper.
    pub controlled: CostEvaluation,
    /// The zero control replayed through the stepper.
    pub uncontrolled: CostEvaluation,
    pub build_seconds: f64,
    pub solve_seconds: f64,
}

pub fn run_benchmark(bench: &Benchmark, prune: &PruneConfig) -> Result<Solution> {
    let grid = bench.time_grid()?;
    let stepper = bench.stepper()?;
    let start = Instant::now();
    let built = build_tree(
        &bench.problem,
        stepper.as_ref(),
        &grid,
        &bench.controls,
        &bench.x0,
        prune,
    )?;
    let build_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let values = solve_for_tree(&built.tree, &bench.problem, &grid, &bench.controls)?;
    let solve_seconds = start.elapsed().as_secs_f64();
    let trajectory = synthesize_trajectory(&built.tree, &values, &bench.problem, &grid, &bench.controls)?;
    let controlled = evaluate_cost(
        &bench.problem,
        &grid,
        &bench.x0,
        &control_sequence(&trajectory, &bench.controls),
        stepper.as_ref(),
    )?;
    let zero = vec![0.0; bench.problem.control_dim()];
    let uncontrolled = evaluate_cost(
        &bench.problem,
        &grid,
        &bench.x0,
        &constant_sequence(&zero, &grid),
        stepper.as_ref(),
    )?;
    Ok(Solution {
        built,
        values,
        trajectory,
        controlled,
        uncontrolled,
        build_seconds,
        solve_seconds,
    })
}
