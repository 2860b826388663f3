//! Backward dynamic programming on the tree.
//!
//! ```text
//! V^N(z) = g(z)
//! V^n(z) = min_j { e^{-lambda dt} V^{n+1}(child(z, j)) + dt L(z, u_j, t_n) }
//! ```
//!
//! The minimum is a direct comparison over the discrete control set with the
//! lowest index winning ties. Each level is swept in parallel; levels are
//! processed one after another.

use rayon::prelude::*;

use crate::controls::ControlGrid;
use crate::error::{Result, TsaError};
use crate::problem::OcProblem;
use crate::time::TimeGrid;
use crate::tree::{NodeRef, Tree};
use crate::value::{Coverage, ValueLayer, ValueTable};

fn check_inputs(tree: &Tree, problem: &OcProblem, grid: &TimeGrid, controls: &ControlGrid) -> Result<()> {
    problem.check_controls(controls)?;
    if tree.dim() != problem.dim() {
        return Err(TsaError::Dimension {
            what: "tree state",
            expected: problem.dim(),
            got: tree.dim(),
        });
    }
    if tree.branching() != controls.len() {
        return Err(TsaError::Dimension {
            what: "control count",
            expected: tree.branching(),
            got: controls.len(),
        });
    }
    if tree.steps() != grid.steps() {
        return Err(TsaError::Dimension {
            what: "time steps",
            expected: tree.steps(),
            got: grid.steps(),
        });
    }
    Ok(())
}

/// Minimum over controls at one node. `next` looks up `V^{n+1}`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn bellman_min(
    tree: &Tree,
    problem: &OcProblem,
    controls: &ControlGrid,
    node: NodeRef,
    t: f64,
    dt: f64,
    discount: f64,
    next: impl Fn(NodeRef) -> Option<f64>,
) -> Result<(f64, u32)> {
    let x = tree.state(node);
    let mut best = f64::INFINITY;
    let mut arg = 0u32;
    for (j, &child) in tree.children(node).iter().enumerate() {
        let v = next(child).ok_or_else(|| TsaError::Structure {
            node,
            reason: format!("child {child} has no value at the next time"),
        })?;
        let q = discount * v + dt * problem.running_cost(x, controls.point(j), t);
        if q < best {
            best = q;
            arg = j as u32;
        }
    }
    if !best.is_finite() {
        return Err(TsaError::NonFiniteValue(format!("value at node {node} is {best}")));
    }
    Ok((best, arg))
}

fn terminal_values(tree: &Tree, problem: &OcProblem, level: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = tree
        .level_states(level)
        .par_chunks(tree.dim())
        .map(|x| problem.terminal_cost(x))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(TsaError::NonFiniteValue(format!(
            "terminal cost at node {} is {}",
            NodeRef::new(level, i),
            values[i]
        )));
    }
    Ok(values)
}

/// Values on native levels only: `V^n` is defined on level `n`.
pub fn solve_value(tree: &Tree, problem: &OcProblem, grid: &TimeGrid, controls: &ControlGrid) -> Result<ValueTable> {
    check_inputs(tree, problem, grid, controls)?;
    let steps = tree.steps();
    let dt = grid.dt();
    let discount = problem.step_discount(dt);
    let mut layers: Vec<Option<ValueLayer>> = vec![None; steps + 1];
    layers[steps] = Some(ValueLayer {
        first_level: steps,
        values: vec![terminal_values(tree, problem, steps)?],
        argmin: Vec::new(),
    });
    for n in (0..steps).rev() {
        let next = &layers[n + 1].as_ref().expect("filled").values[0];
        let t = grid.time(n);
        let solved: Vec<(f64, u32)> = (0..tree.level_len(n))
            .into_par_iter()
            .map(|i| {
                bellman_min(tree, problem, controls, NodeRef::new(n, i), t, dt, discount, |c| {
                    (c.level() == n + 1).then(|| next[c.index()])
                })
            })
            .collect::<Result<_>>()?;
        let (values, argmin) = solved.into_iter().unzip();
        layers[n] = Some(ValueLayer {
            first_level: n,
            values: vec![values],
            argmin: vec![argmin],
        });
    }
    Ok(ValueTable::new(
        Coverage::NativeLevel,
        layers.into_iter().map(|l| l.expect("filled")).collect(),
    ))
}

/// Values for autonomous dynamics: `V^n` is defined on every node of levels
/// `0..=n`, reusing the time-independent edges at every backward step.
/// The terminal cost is imposed on the whole tree.
pub fn solve_value_autonomous(
    tree: &Tree,
    problem: &OcProblem,
    grid: &TimeGrid,
    controls: &ControlGrid,
) -> Result<ValueTable> {
    check_inputs(tree, problem, grid, controls)?;
    if !problem.is_autonomous() {
        return Err(TsaError::invalid(format!(
            "'{}' is not autonomous; the extended value table is undefined",
            problem.name()
        )));
    }
    let steps = tree.steps();
    let dt = grid.dt();
    let discount = problem.step_discount(dt);
    let terminal = (0..=steps)
        .map(|k| terminal_values(tree, problem, k))
        .collect::<Result<Vec<_>>>()?;
    let mut layers: Vec<Option<ValueLayer>> = vec![None; steps + 1];
    layers[steps] = Some(ValueLayer {
        first_level: 0,
        values: terminal,
        argmin: Vec::new(),
    });
    for n in (0..steps).rev() {
        let next = &layers[n + 1].as_ref().expect("filled").values;
        let t = grid.time(n);
        let mut values = Vec::with_capacity(n + 1);
        let mut argmin = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let solved: Vec<(f64, u32)> = (0..tree.level_len(k))
                .into_par_iter()
                .map(|i| {
                    bellman_min(tree, problem, controls, NodeRef::new(k, i), t, dt, discount, |c| {
                        next.get(c.level()).map(|lvl| lvl[c.index()])
                    })
                })
                .collect::<Result<_>>()?;
            let (v, a): (Vec<f64>, Vec<u32>) = solved.into_iter().unzip();
            values.push(v);
            argmin.push(a);
        }
        layers[n] = Some(ValueLayer {
            first_level: 0,
            values,
            argmin,
        });
    }
    Ok(ValueTable::new(
        Coverage::AutonomousExtension,
        layers.into_iter().map(|l| l.expect("filled")).collect(),
    ))
}

/// Largest `|stored - recomputed|` of the Bellman right-hand side over every
/// covered non-terminal entry. Entries whose children are not covered at the
/// next time count as infinite residual.
pub fn check_dp_consistency(
    tree: &Tree,
    values: &ValueTable,
    problem: &OcProblem,
    grid: &TimeGrid,
    controls: &ControlGrid,
) -> Result<f64> {
    check_inputs(tree, problem, grid, controls)?;
    let dt = grid.dt();
    let discount = problem.step_discount(dt);
    let mut worst: f64 = 0.0;
    for n in 0..tree.steps() {
        let t = grid.time(n);
        let residual = values
            .levels_at(n)
            .flat_map(|k| tree.nodes(k))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|node| {
                let stored = values.value(n, node).unwrap_or(f64::NAN);
                let x = tree.state(node);
                let rhs = tree
                    .children(node)
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| {
                        let v = values.value(n + 1, c).unwrap_or(f64::INFINITY);
                        discount * v + dt * problem.running_cost(x, controls.point(j), t)
                    })
                    .fold(f64::INFINITY, f64::min);
                let r = (stored - rhs).abs();
                if r.is_nan() {
                    f64::INFINITY
                } else {
                    r
                }
            })
            .reduce(|| 0.0, f64::max);
        worst = worst.max(residual);
    }
    Ok(worst)
}

/// Constants entering the Lipschitz estimate of the discrete value function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzData {
    pub dynamics: f64,
    pub running_cost: f64,
    pub terminal_cost: f64,
    pub discount: f64,
}

impl LipschitzData {
    pub fn new(dynamics: f64, running_cost: f64, terminal_cost: f64, discount: f64) -> Result<Self> {
        let all = [dynamics, running_cost, terminal_cost, discount];
        if all.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(TsaError::invalid("Lipschitz data must be finite and >= 0"));
        }
        Ok(LipschitzData {
            dynamics,
            running_cost,
            terminal_cost,
            discount,
        })
    }

    pub fn from_problem(problem: &OcProblem) -> Option<Self> {
        problem.lipschitz().map(|c| LipschitzData {
            dynamics: c.dynamics,
            running_cost: c.running_cost,
            terminal_cost: c.terminal_cost,
            discount: problem.discount(),
        })
    }
}

/// Upper bound on `|V^n(x) - V^n(y)|` given `|x - y|` and the time `T - t_n`
/// left to the horizon.
pub fn lipschitz_bound(data: &LipschitzData, remaining: f64, distance: f64) -> f64 {
    let rate = data.dynamics - data.discount;
    let growth = (remaining * rate).exp();
    let running = if data.dynamics > data.discount {
        data.running_cost / rate * (growth - 1.0)
    } else {
        data.running_cost * remaining
    };
    distance * (running + data.terminal_cost * growth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_tree, PruneConfig};
    use crate::stepper::{ExplicitEuler, Stepper};

    fn test1() -> OcProblem {
        OcProblem::new(
            "test1",
            2,
            1,
            |x, u, _t, o| {
                o[0] = u[0];
                o[1] = x[0] * x[0];
            },
            |_, _, _| 0.0,
            |x| -x[1],
        )
        .unwrap()
        .autonomous(true)
    }

    #[test]
    fn one_step_hand_enumeration() {
        // x0 = (0, 1), dt = 0.5: leaves (-0.5, 1) and (0.5, 1), both with g = -1.
        let p = test1();
        let grid = TimeGrid::new(0.0, 0.5, 1).unwrap();
        let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        let s = ExplicitEuler::new(&p, 0.5);
        let tree = build_tree(&p, &s, &grid, &c, &[0.0, 1.0], &PruneConfig::unpruned())
            .unwrap()
            .tree;
        let v = solve_value(&tree, &p, &grid, &c).unwrap();
        assert_eq!(v.root_value(), -1.0);
        assert_eq!(v.argmin(0, NodeRef::ROOT), Some(0));
    }

    #[test]
    fn constant_terminal_cost_propagates() {
        let p = OcProblem::new("c", 1, 1, |x, u, _t, o| o[0] = x[0] + u[0], |_, _, _| 0.0, |_| 3.5).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 6).unwrap();
        let c = ControlGrid::scalar(&[-1.0, 0.0, 1.0]).unwrap();
        let s = ExplicitEuler::new(&p, grid.dt());
        let tree = build_tree(&p, &s, &grid, &c, &[0.2], &PruneConfig::unpruned())
            .unwrap()
            .tree;
        let v = solve_value(&tree, &p, &grid, &c).unwrap();
        for n in 0..=6 {
            assert!(v.native(n).iter().all(|&x| x == 3.5));
        }
    }

    #[test]
    fn perturbed_value_is_detected() {
        let p = test1();
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        let s = ExplicitEuler::new(&p, grid.dt());
        let tree = build_tree(&p, &s, &grid, &c, &[-0.5, 0.5], &PruneConfig::unpruned())
            .unwrap()
            .tree;
        let mut v = solve_value(&tree, &p, &grid, &c).unwrap();
        assert!(check_dp_consistency(&tree, &v, &p, &grid, &c).unwrap() <= 1e-12);
        v.set_value(2, NodeRef::new(2, 1), v.value(2, NodeRef::new(2, 1)).unwrap() + 0.1);
        assert!(check_dp_consistency(&tree, &v, &p, &grid, &c).unwrap() >= 0.1 - 1e-12);
    }

    #[test]
    fn zero_steps_has_no_residual() {
        let p = test1();
        let grid = TimeGrid::new(0.0, 0.0, 0).unwrap();
        let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        let s = ExplicitEuler::new(&p, 0.0);
        let tree = build_tree(&p, &s, &grid, &c, &[1.0, 2.0], &PruneConfig::unpruned())
            .unwrap()
            .tree;
        let v = solve_value(&tree, &p, &grid, &c).unwrap();
        assert_eq!(v.root_value(), -2.0);
        assert_eq!(check_dp_consistency(&tree, &v, &p, &grid, &c).unwrap(), 0.0);
    }

    #[test]
    fn autonomous_rejects_time_dependent_problem() {
        let p = test1().autonomous(false);
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        let s = ExplicitEuler::new(&p, grid.dt());
        let tree = build_tree(&p, &s, &grid, &c, &[1.0, 2.0], &PruneConfig::unpruned())
            .unwrap()
            .tree;
        assert!(solve_value_autonomous(&tree, &p, &grid, &c).is_err());
    }

    #[test]
    fn autonomous_root_at_last_step_is_one_step_minimum() {
        let p = test1();
        let grid = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        let s = ExplicitEuler::new(&p, grid.dt());
        let tree = build_tree(&p, &s, &grid, &c, &[-0.5, 0.5], &PruneConfig::unpruned())
            .unwrap()
            .tree;
        let v = solve_value_autonomous(&tree, &p, &grid, &c).unwrap();
        let direct = c
            .iter()
            .map(|u| -s.step(tree.root(), u, 0.0).unwrap()[1])
            .fold(f64::INFINITY, f64::min);
        assert_eq!(v.value(4, NodeRef::ROOT), Some(direct));
        // The terminal cost sits on the whole tree.
        for k in 0..=5 {
            for node in tree.nodes(k) {
                assert_eq!(v.value(5, node), Some(-tree.state(node)[1]));
            }
        }
    }

    #[test]
    fn lipschitz_bound_examples() {
        let d = LipschitzData::new(0.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(lipschitz_bound(&d, 1.0, 2.0), 2.0);
        let d = LipschitzData::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!((lipschitz_bound(&d, 1.0, 1.0) - (std::f64::consts::E - 1.0)).abs() < 1e-15);
        assert_eq!(lipschitz_bound(&d, 1.0, 0.0), 0.0);
        // L_f == lambda takes the second branch.
        let d = LipschitzData::new(0.5, 2.0, 1.0, 0.5).unwrap();
        assert_eq!(lipschitz_bound(&d, 3.0, 1.0), 2.0 * 3.0 + 1.0);
    }
}
