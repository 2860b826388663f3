#![allow(dead_code)]

use std::time::Instant;

use tsa::dp::{solve_value, solve_value_autonomous};
use tsa::metrics::{err_22, err_inf2, relative_l2_errors};
use tsa::oracle::exact_value_test1;
use tsa::problems::make_test1;
use tsa::{build_tree, ControlGrid, ExplicitEuler, PruneConfig, PruneScope, TimeGrid, Tree, ValueTable};

pub struct Test1Run {
    pub nodes: usize,
    pub errors: Vec<f64>,
    pub err22: f64,
    pub errinf2: f64,
    pub seconds: f64,
}

/// Test 1 from `(-0.5, 0.5)` with controls `{-1, 1}`. Pruned runs with
/// tree scope use the extended value table.
pub fn test1_run(dt: f64, horizon: f64, eps: f64, scope: PruneScope) -> Test1Run {
    let p = make_test1();
    let grid = TimeGrid::with_step(0.0, horizon, dt).unwrap();
    let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
    let s = ExplicitEuler::new(&p, dt);
    let start = Instant::now();
    let cfg = if eps == 0.0 {
        PruneConfig::unpruned()
    } else {
        PruneConfig::with_tolerance(eps).scope(scope)
    };
    let built = build_tree(&p, &s, &grid, &c, &[-0.5, 0.5], &cfg).unwrap();
    let v = if scope == PruneScope::Tree && eps > 0.0 {
        solve_value_autonomous(&built.tree, &p, &grid, &c).unwrap()
    } else {
        solve_value(&built.tree, &p, &grid, &c).unwrap()
    };
    let seconds = start.elapsed().as_secs_f64();
    let errors = relative_l2_errors(&built.tree, &v, |n, _, x| exact_value_test1(x, grid.time(n), horizon)).unwrap();
    Test1Run {
        nodes: built.cardinality(),
        err22: err_22(&errors, dt),
        errinf2: err_inf2(&errors),
        errors,
        seconds,
    }
}

pub fn within_rel(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

/// Largest distance of a child from the segment spanned by the children
/// under the first and last control, over all non-terminal nodes.
pub fn segment_deviation(tree: &Tree) -> f64 {
    let m = tree.branching();
    let mut worst: f64 = 0.0;
    for n in 0..tree.steps() {
        for node in tree.nodes(n) {
            let ch = tree.children(node);
            let a = tree.state(ch[0]);
            let b = tree.state(ch[m - 1]);
            let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
            let len2: f64 = ab.iter().map(|v| v * v).sum();
            for &c in ch {
                let z = tree.state(c);
                let s = if len2 > 0.0 {
                    (z.iter().zip(a).zip(&ab).map(|((z, a), d)| (z - a) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let d2: f64 = z
                    .iter()
                    .zip(a)
                    .zip(&ab)
                    .map(|((z, a), d)| (z - a - s * d).powi(2))
                    .sum();
                worst = worst.max(d2.sqrt());
            }
        }
    }
    worst
}

/// Largest excursion of a child outside the componentwise box spanned by
/// the children under the first and last control.
pub fn box_violation(tree: &Tree) -> f64 {
    let m = tree.branching();
    let mut worst: f64 = 0.0;
    for n in 0..tree.steps() {
        for node in tree.nodes(n) {
            let ch = tree.children(node);
            let a = tree.state(ch[0]);
            let b = tree.state(ch[m - 1]);
            for &c in ch {
                for (k, z) in tree.state(c).iter().enumerate() {
                    let (lo, hi) = (a[k].min(b[k]), a[k].max(b[k]));
                    worst = worst.max(lo - z).max(z - hi);
                }
            }
        }
    }
    worst
}

/// `V^n` at every node of level `n`, paired with the state.
pub fn level_values<'a>(
    tree: &'a Tree,
    values: &'a ValueTable,
    n: usize,
) -> impl Iterator<Item = (&'a [f64], f64)> + 'a {
    tree.nodes(n)
        .map(move |node| (tree.state(node), values.value(n, node).unwrap()))
}
