//! Feedback synthesis along the tree and cost evaluation of control
//! sequences.

use crate::controls::ControlGrid;
use crate::error::{Result, TsaError};
use crate::problem::OcProblem;
use crate::stepper::Stepper;
use crate::time::TimeGrid;
use crate::trajectory::Trajectory;
use crate::tree::{NodeRef, Tree};
use crate::value::ValueTable;

/// Follows the stored minimizers from the root: at step `n` the control
/// `u*_n` minimizing `e^{-lambda dt} V^{n+1}(child) + dt L` is applied and
/// the corresponding tree edge is taken.
pub fn synthesize_trajectory(
    tree: &Tree,
    values: &ValueTable,
    problem: &OcProblem,
    grid: &TimeGrid,
    controls: &ControlGrid,
) -> Result<Trajectory> {
    if values.steps() != tree.steps() || grid.steps() != tree.steps() {
        return Err(TsaError::Dimension {
            what: "time steps",
            expected: tree.steps(),
            got: values.steps(),
        });
    }
    if controls.len() != tree.branching() {
        return Err(TsaError::Dimension {
            what: "control count",
            expected: tree.branching(),
            got: controls.len(),
        });
    }
    let dt = grid.dt();
    let lambda = problem.discount();
    let mut node = NodeRef::ROOT;
    let mut traj = Trajectory {
        times: vec![grid.time(0)],
        states: vec![tree.root().to_vec()],
        nodes: vec![node],
        control_indices: Vec::with_capacity(tree.steps()),
        step_costs: Vec::with_capacity(tree.steps()),
        terminal_cost: 0.0,
        total_cost: 0.0,
    };
    for n in 0..tree.steps() {
        let j = values.argmin(n, node).ok_or_else(|| wrong_coverage(n, node))?;
        let t = grid.time(n);
        let weight = (-lambda * (t - grid.t0())).exp();
        traj.step_costs
            .push(weight * dt * problem.running_cost(tree.state(node), controls.point(j), t));
        traj.control_indices.push(j);
        node = tree.child(node, j);
        if !values.covers(n + 1, node) {
            return Err(wrong_coverage(n + 1, node));
        }
        traj.times.push(grid.time(n + 1));
        traj.states.push(tree.state(node).to_vec());
        traj.nodes.push(node);
    }
    traj.terminal_cost = (-lambda * (grid.horizon() - grid.t0())).exp() * problem.terminal_cost(tree.state(node));
    traj.total_cost = traj.step_costs.iter().sum::<f64>() + traj.terminal_cost;
    Ok(traj)
}

fn wrong_coverage(n: usize, node: NodeRef) -> TsaError {
    TsaError::Structure {
        node,
        reason: format!(
            "value table does not cover this node at time index {n}; \
             cross-level trees need the autonomous value table"
        ),
    }
}

/// Re-derives the minimizing control at `(n, node)` from `V^{n+1}` instead
/// of reading the stored index.
pub fn rederive_control(
    tree: &Tree,
    values: &ValueTable,
    problem: &OcProblem,
    grid: &TimeGrid,
    controls: &ControlGrid,
    n: usize,
    node: NodeRef,
) -> Result<usize> {
    let dt = grid.dt();
    let discount = problem.step_discount(dt);
    let t = grid.time(n);
    let x = tree.state(node);
    let mut best = (f64::INFINITY, 0usize);
    for (j, &child) in tree.children(node).iter().enumerate() {
        let v = values.value(n + 1, child).ok_or_else(|| wrong_coverage(n + 1, child))?;
        let q = discount * v + dt * problem.running_cost(x, controls.point(j), t);
        if q < best.0 {
            best = (q, j);
        }
    }
    Ok(best.1)
}

/// Forward simulation of a control sequence with its discrete cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEvaluation {
    pub states: Vec<Vec<f64>>,
    /// Discounted running cost accumulated over `[t0, t_n)`.
    pub running: Vec<f64>,
    /// `J(t_n)`: the cost functional with horizon `t_n`, i.e. `running[n]`
    /// plus the discounted terminal cost of the state reached at `t_n`.
    pub functional: Vec<f64>,
    pub terminal_cost: f64,
    pub total: f64,
}

/// Simulates `controls_seq` with the stepper and accumulates
/// `J = sum_n e^{-lambda (t_n - t0)} dt L(y_n, u_n, t_n) + e^{-lambda (T - t0)} g(y_N)`.
pub fn evaluate_cost(
    problem: &OcProblem,
    grid: &TimeGrid,
    x0: &[f64],
    controls_seq: &[&[f64]],
    stepper: &dyn Stepper,
) -> Result<CostEvaluation> {
    problem.check_state("initial state", x0)?;
    if controls_seq.len() != grid.steps() {
        return Err(TsaError::Dimension {
            what: "control sequence length",
            expected: grid.steps(),
            got: controls_seq.len(),
        });
    }
    if let Some(u) = controls_seq.iter().find(|u| u.len() != problem.control_dim()) {
        return Err(TsaError::Dimension {
            what: "control",
            expected: problem.control_dim(),
            got: u.len(),
        });
    }
    let dt = grid.dt();
    let lambda = problem.discount();
    let mut states = vec![x0.to_vec()];
    let mut running = vec![0.0];
    let mut acc = 0.0;
    for (n, u) in controls_seq.iter().enumerate() {
        let t = grid.time(n);
        let y = &states[n];
        acc += (-lambda * (t - grid.t0())).exp() * dt * problem.running_cost(y, u, t);
        running.push(acc);
        let next = stepper.step(y, u, t)?;
        states.push(next);
    }
    let functional: Vec<f64> = (0..=grid.steps())
        .map(|n| running[n] + (-lambda * (grid.time(n) - grid.t0())).exp() * problem.terminal_cost(&states[n]))
        .collect();
    let terminal_cost = (-lambda * (grid.horizon() - grid.t0())).exp() * problem.terminal_cost(&states[grid.steps()]);
    Ok(CostEvaluation {
        states,
        running,
        functional,
        terminal_cost,
        total: acc + terminal_cost,
    })
}

/// The control vectors of a synthesized trajectory, for [`evaluate_cost`].
pub fn control_sequence<'a>(traj: &Trajectory, controls: &'a ControlGrid) -> Vec<&'a [f64]> {
    traj.control_indices.iter().map(|&j| controls.point(j)).collect()
}

/// Constant control sequence of length `grid.steps()`.
pub fn constant_sequence<'a>(u: &'a [f64], grid: &TimeGrid) -> Vec<&'a [f64]> {
    vec![u; grid.steps()]
}
