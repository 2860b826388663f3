//! Forward construction of the pruned tree.
//!
//! Level `n + 1` is generated from level `n` by applying the stepper to every
//! node under every control. Candidates are produced in parallel and then
//! merged sequentially in parent-id order, controls in grid order, so the
//! result does not depend on the thread count. A candidate within the merge
//! tolerance of an in-scope node is dropped and its parent edge is redirected
//! to the closest such node; dropped candidates never get children.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::controls::ControlGrid;
use crate::error::{Result, TsaError};
use crate::neighbor::{NeighborIndex, NeighborStrategy};
use crate::problem::{OcProblem, StateNorm};
use crate::stepper::Stepper;
use crate::time::TimeGrid;
use crate::tree::{Level, NodeRef, Tree};

/// Which existing nodes a new candidate may merge into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneScope {
    /// Nodes already inserted at the candidate's own level.
    Level,
    /// Nodes at every level built so far. Only valid for autonomous
    /// dynamics, where an edge means the same thing at every time.
    Tree,
    /// Distinct states of every level built so far, for any dynamics. A
    /// candidate merged into a state first stored on an earlier level is
    /// listed again on the new level (see [`Tree::origin`]) and expanded at
    /// the new time, so no edge is reused across times.
    Revisit,
}

impl std::str::FromStr for PruneScope {
    type Err = TsaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "level" => Ok(PruneScope::Level),
            "tree" => Ok(PruneScope::Tree),
            "revisit" => Ok(PruneScope::Revisit),
            other => Err(TsaError::invalid(format!(
                "unknown prune scope '{other}' (expected level, tree or revisit)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneConfig {
    /// Merge radius; `0` disables pruning entirely.
    pub tolerance: f64,
    pub scope: PruneScope,
    /// `None` picks [`NeighborStrategy::auto`] from the state dimension.
    pub strategy: Option<NeighborStrategy>,
    pub max_nodes: usize,
    /// Overrides the problem's state norm.
    pub norm: Option<StateNorm>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            tolerance: 0.0,
            scope: PruneScope::Level,
            strategy: None,
            max_nodes: Self::DEFAULT_MAX_NODES,
            norm: None,
        }
    }
}

impl PruneConfig {
    pub const DEFAULT_MAX_NODES: usize = 50_000_000;

    /// No merging: the full tree.
    pub fn unpruned() -> Self {
        Self::default()
    }

    pub fn with_tolerance(tolerance: f64) -> Self {
        PruneConfig {
            tolerance,
            ..Self::default()
        }
    }

    pub fn scope(mut self, scope: PruneScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn strategy(mut self, strategy: NeighborStrategy) -> Self {
        self.strategy = Some(strategy);
        self
    }

    pub fn max_nodes(mut self, max_nodes: usize) -> Self {
        self.max_nodes = max_nodes;
        self
    }

    pub fn norm(mut self, norm: StateNorm) -> Self {
        self.norm = Some(norm);
        self
    }
}

/// Per-level construction statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub level: usize,
    pub nodes: usize,
    pub candidates: usize,
    pub merged: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BuiltTree {
    pub tree: Tree,
    pub stats: Vec<LevelStats>,
    pub config: PruneConfig,
    pub strategy: Option<NeighborStrategy>,
}

impl BuiltTree {
    pub fn merged(&self) -> usize {
        self.stats.iter().map(|s| s.merged).sum()
    }

    /// `|T|`: distinct stored states.
    pub fn cardinality(&self) -> usize {
        self.tree.distinct_len()
    }
}

pub fn build_tree(
    problem: &OcProblem,
    stepper: &dyn Stepper,
    grid: &TimeGrid,
    controls: &ControlGrid,
    x0: &[f64],
    prune: &PruneConfig,
) -> Result<BuiltTree> {
    let dim = problem.dim();
    problem.check_state("initial state", x0)?;
    problem.check_controls(controls)?;
    if stepper.dim() != dim {
        return Err(TsaError::Dimension {
            what: "stepper",
            expected: dim,
            got: stepper.dim(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(TsaError::invalid("initial state must be finite"));
    }
    if grid.steps() > 0 && (stepper.dt() - grid.dt()).abs() > 1e-12 * grid.dt() {
        return Err(TsaError::invalid(format!(
            "stepper dt {} does not match time grid dt {}",
            stepper.dt(),
            grid.dt()
        )));
    }
    if !(prune.tolerance >= 0.0) || !prune.tolerance.is_finite() {
        return Err(TsaError::invalid(format!(
            "merge tolerance must be >= 0, got {}",
            prune.tolerance
        )));
    }
    if prune.scope == PruneScope::Tree && !problem.is_autonomous() {
        return Err(TsaError::invalid("cross-level pruning requires autonomous dynamics"));
    }
    if prune.max_nodes == 0 {
        return Err(TsaError::invalid("max_nodes must be >= 1"));
    }

    let m = controls.len();
    let norm = prune.norm.unwrap_or(problem.norm());
    let pruning = prune.tolerance > 0.0;
    let strategy = pruning.then(|| prune.strategy.unwrap_or(NeighborStrategy::auto(dim)));

    let mut levels: Vec<Level> = vec![Level::new(x0.to_vec(), Vec::new())];
    let mut stats = vec![LevelStats {
        level: 0,
        nodes: 1,
        candidates: 0,
        merged: 0,
        seconds: 0.0,
    }];
    let mut total = 1usize;
    // Persistent index for the cross-level scopes.
    let mut tree_index: Option<NeighborIndex> = None;
    // Distinct states in insertion order (revisit scope).
    let mut distinct = vec![NodeRef::ROOT];

    for n in 0..grid.steps() {
        let start = Instant::now();
        let t = grid.time(n);
        let parents = &levels[n].states;
        let parent_count = parents.len() / dim;
        let count = parent_count * m;

        let mut candidates = vec![0.0; count * dim];
        candidates
            .par_chunks_mut(m * dim)
            .zip(parents.par_chunks(dim))
            .for_each(|(out, x)| {
                for (j, o) in out.chunks_exact_mut(dim).enumerate() {
                    stepper.step_into(x, controls.point(j), t, o);
                }
            });
        if let Some(k) = candidates
            .par_chunks(dim)
            .position_first(|c| c.iter().any(|v| !v.is_finite()))
        {
            return Err(TsaError::NonFinite {
                level: n + 1,
                parent: k / m,
                control: k % m,
            });
        }

        let mut origins = Vec::new();
        let (states, children, merged) = match strategy {
            Some(strategy) if prune.scope == PruneScope::Revisit => {
                let index = match &mut tree_index {
                    Some(index) if !index.fell_back() => index,
                    slot => {
                        let mut sample: Vec<f64> = distinct
                            .iter()
                            .flat_map(|&o| levels_state(&levels, o, dim))
                            .copied()
                            .collect();
                        sample.extend_from_slice(&candidates);
                        let mut index = NeighborIndex::new(strategy, prune.tolerance, norm, dim, &sample)?;
                        for &o in &distinct {
                            index.insert(o, levels_state(&levels, o, dim));
                        }
                        slot.insert(index)
                    }
                };
                let mut states = Vec::new();
                let mut children = Vec::with_capacity(count);
                let mut listed: HashMap<NodeRef, NodeRef> = HashMap::new();
                let mut merged = 0usize;
                for cand in candidates.chunks_exact(dim) {
                    let id = NodeRef::new(n + 1, states.len() / dim);
                    match index.find_merge_target(cand) {
                        Some(origin) => {
                            merged += 1;
                            let child = *listed.entry(origin).or_insert(id);
                            if child == id {
                                let s = if origin.level() == n + 1 {
                                    &states[origin.index() * dim..(origin.index() + 1) * dim]
                                } else {
                                    levels_state(&levels, origin, dim)
                                };
                                let s = s.to_vec();
                                states.extend_from_slice(&s);
                                origins.push(origin);
                                total += 1;
                            }
                            children.push(child);
                        }
                        None => {
                            states.extend_from_slice(cand);
                            origins.push(id);
                            index.insert(id, cand);
                            distinct.push(id);
                            listed.insert(id, id);
                            children.push(id);
                            total += 1;
                        }
                    }
                    if total > prune.max_nodes {
                        return Err(node_cap(prune.max_nodes, n + 1, stats));
                    }
                }
                (states, children, merged)
            }
            Some(strategy) => {
                let fresh_index = |sample: &[f64]| NeighborIndex::new(strategy, prune.tolerance, norm, dim, sample);
                let mut level_index;
                let index = match prune.scope {
                    PruneScope::Tree => {
                        let stale = tree_index.as_ref().is_none_or(|i| i.fell_back());
                        if stale {
                            // (Re)build so the projection direction reflects
                            // the spread seen so far.
                            let mut sample: Vec<f64> = levels.iter().flat_map(|l| l.states.iter().copied()).collect();
                            sample.extend_from_slice(&candidates);
                            let mut index = fresh_index(&sample)?;
                            for (k, lvl) in levels.iter().enumerate() {
                                for (i, s) in lvl.states.chunks_exact(dim).enumerate() {
                                    index.insert(NodeRef::new(k, i), s);
                                }
                            }
                            tree_index = Some(index);
                        }
                        tree_index.as_mut().expect("index initialized above")
                    }
                    _ => {
                        level_index = fresh_index(&candidates)?;
                        &mut level_index
                    }
                };
                let mut states = Vec::new();
                let mut children = Vec::with_capacity(count);
                let mut merged = 0usize;
                for cand in candidates.chunks_exact(dim) {
                    match index.find_merge_target(cand) {
                        Some(target) => {
                            children.push(target);
                            merged += 1;
                        }
                        None => {
                            let id = NodeRef::new(n + 1, states.len() / dim);
                            total += 1;
                            if total > prune.max_nodes {
                                return Err(node_cap(prune.max_nodes, n + 1, stats));
                            }
                            states.extend_from_slice(cand);
                            index.insert(id, cand);
                            children.push(id);
                        }
                    }
                }
                (states, children, merged)
            }
            None => {
                total += count;
                if total > prune.max_nodes {
                    return Err(node_cap(prune.max_nodes, n + 1, stats));
                }
                let children = (0..count).map(|k| NodeRef::new(n + 1, k)).collect();
                (candidates, children, 0)
            }
        };

        levels[n].children = children;
        let nodes = states.len() / dim;
        levels.push(Level::new(states, Vec::new()).with_origins(origins));
        stats.push(LevelStats {
            level: n + 1,
            nodes,
            candidates: count,
            merged,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    Ok(BuiltTree {
        tree: Tree::from_levels_unchecked(dim, m, levels),
        stats,
        config: prune.clone(),
        strategy,
    })
}

fn levels_state(levels: &[Level], node: NodeRef, dim: usize) -> &[f64] {
    let i = node.index();
    &levels[node.level()].states[i * dim..(i + 1) * dim]
}

fn node_cap(cap: usize, level: usize, stats: Vec<LevelStats>) -> TsaError {
    TsaError::NodeCap { cap, level, stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::ExplicitEuler;

    fn drift() -> OcProblem {
        OcProblem::new(
            "drift",
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

    fn build(problem: &OcProblem, dt: f64, steps: usize, controls: &[f64], prune: PruneConfig) -> Result<BuiltTree> {
        let grid = TimeGrid::new(0.0, dt * steps as f64, steps).unwrap();
        let stepper = ExplicitEuler::new(problem, grid.dt());
        let controls = ControlGrid::scalar(controls).unwrap();
        build_tree(problem, &stepper, &grid, &controls, &[-0.5, 0.5], &prune)
    }

    #[test]
    fn zero_steps_gives_single_node() {
        let p = drift();
        let grid = TimeGrid::new(0.0, 0.0, 0).unwrap();
        let stepper = ExplicitEuler::new(&p, 0.0);
        let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        let b = build_tree(&p, &stepper, &grid, &c, &[1.0, 2.0], &PruneConfig::unpruned()).unwrap();
        assert_eq!(b.tree.len(), 1);
        assert_eq!(b.tree.root(), &[1.0, 2.0]);
    }

    #[test]
    fn unpruned_count_is_full() {
        let b = build(&drift(), 0.2, 5, &[-1.0, 1.0], PruneConfig::unpruned()).unwrap();
        assert_eq!(b.tree.len(), 63);
        assert_eq!(b.merged(), 0);
    }

    #[test]
    fn node_cap_aborts_with_partial_stats() {
        let err = build(&drift(), 0.1, 10, &[-1.0, 1.0], PruneConfig::unpruned().max_nodes(100)).unwrap_err();
        match err {
            TsaError::NodeCap { cap, level, stats } => {
                assert_eq!(cap, 100);
                assert_eq!(level, 6);
                assert_eq!(stats.len(), 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cross_level_scope_needs_autonomy() {
        let p = drift().autonomous(false);
        let r = build(
            &p,
            0.1,
            3,
            &[-1.0, 1.0],
            PruneConfig::with_tolerance(0.01).scope(PruneScope::Tree),
        );
        assert!(r.is_err());
    }

    #[test]
    fn non_finite_state_reports_parent_and_control() {
        let p = OcProblem::new(
            "blowup",
            1,
            1,
            |x, u, _t, o| o[0] = if u[0] > 0.0 && x[0] >= 0.5 { f64::INFINITY } else { 1.0 },
            |_, _, _| 0.0,
            |_| 0.0,
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let s = ExplicitEuler::new(&p, 0.5);
        let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        match build_tree(&p, &s, &grid, &c, &[0.0], &PruneConfig::unpruned()) {
            Err(TsaError::NonFinite { level, parent, control }) => {
                assert_eq!((level, parent, control), (2, 0, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn forced() -> OcProblem {
        OcProblem::new(
            "forced",
            2,
            1,
            |x, u, t, o| {
                o[0] = x[1];
                o[1] = -x[0] + (3.0 * t).sin() + u[0];
            },
            |x, _, _| x[0] * x[0],
            |x| x[0] * x[0] + x[1] * x[1],
        )
        .unwrap()
    }

    #[test]
    fn revisit_scope_keeps_edges_on_consecutive_levels() {
        let p = forced();
        let b = build(
            &p,
            0.1,
            12,
            &[-1.0, 0.0, 1.0],
            PruneConfig::with_tolerance(0.02).scope(PruneScope::Revisit),
        )
        .unwrap();
        assert!(!b.tree.has_cross_level_edges());
        assert!(b.cardinality() < b.tree.len());
        let t = &b.tree;
        let rebuilt = Tree::from_levels(
            t.dim(),
            t.branching(),
            (0..t.num_levels()).map(|n| t.level_clone(n)).collect(),
        );
        assert!(rebuilt.is_ok());
        let grid = TimeGrid::new(0.0, 1.2, 12).unwrap();
        let s = ExplicitEuler::new(&p, grid.dt());
        let c = ControlGrid::scalar(&[-1.0, 0.0, 1.0]).unwrap();
        let diag = t.validate(&p, &grid, &c, &s).unwrap();
        assert!(diag.max_edge_residual <= 0.02 * (1.0 + 1e-9));
        let revisits = t.nodes(12).filter(|&node| t.origin(node).level() < 12).count();
        assert!(revisits > 0);
        for node in t.nodes(12) {
            assert_eq!(t.state(node), t.state(t.origin(node)));
        }
    }

    #[test]
    fn revisit_scope_never_merges_less_than_level_scope() {
        let p = forced();
        let level = build(&p, 0.1, 10, &[-1.0, 0.0, 1.0], PruneConfig::with_tolerance(0.02)).unwrap();
        let revisit = build(
            &p,
            0.1,
            10,
            &[-1.0, 0.0, 1.0],
            PruneConfig::with_tolerance(0.02).scope(PruneScope::Revisit),
        )
        .unwrap();
        assert!(revisit.cardinality() <= level.cardinality());
        assert_eq!(level.cardinality(), level.tree.len());
    }

    #[test]
    fn scope_names() {
        assert_eq!("level".parse::<PruneScope>().unwrap(), PruneScope::Level);
        assert_eq!("tree".parse::<PruneScope>().unwrap(), PruneScope::Tree);
        assert_eq!("revisit".parse::<PruneScope>().unwrap(), PruneScope::Revisit);
        assert!("all".parse::<PruneScope>().is_err());
    }
}
