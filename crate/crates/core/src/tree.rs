//! Leveled tree of reachable states.

use std::fmt;

use crate::controls::ControlGrid;
use crate::error::{Result, TsaError};
use crate::problem::OcProblem;
use crate::stepper::Stepper;
use crate::time::TimeGrid;

/// Address of a node: its level and its index within that level.
///
/// Ordering is lexicographic, so lower levels come first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub level: u32,
    pub index: u32,
}

impl NodeRef {
    pub const ROOT: NodeRef = NodeRef { level: 0, index: 0 };

    pub fn new(level: usize, index: usize) -> Self {
        NodeRef {
            level: level as u32,
            index: index as u32,
        }
    }

    pub fn level(&self) -> usize {
        self.level as usize
    }

    pub fn index(&self) -> usize {
        self.index as usize
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.level, self.index)
    }
}

/// Nodes of one time level. States are stored row-major, one row per node;
/// `children[i * M + j]` is the child of node `i` under control `j`.
///
/// `origins[i]`, when present, is the node where the state of node `i` was
/// first stored; a node whose origin lies on an earlier level revisits that
/// state at a later time.
#[derive(Debug, Clone, Default)]
pub struct Level {
    pub(crate) states: Vec<f64>,
    pub(crate) children: Vec<NodeRef>,
    pub(crate) origins: Vec<NodeRef>,
}

impl Level {
    pub fn new(states: Vec<f64>, children: Vec<NodeRef>) -> Self {
        Level {
            states,
            children,
            origins: Vec::new(),
        }
    }

    pub fn with_origins(mut self, origins: Vec<NodeRef>) -> Self {
        self.origins = origins;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Tree {
    dim: usize,
    branching: usize,
    levels: Vec<Level>,
}

impl Tree {
    /// Assembles a tree from raw levels and checks its structure.
    pub fn from_levels(dim: usize, branching: usize, levels: Vec<Level>) -> Result<Self> {
        let tree = Tree { dim, branching, levels };
        tree.check_structure()?;
        Ok(tree)
    }

    pub(crate) fn from_levels_unchecked(dim: usize, branching: usize, levels: Vec<Level>) -> Self {
        Tree { dim, branching, levels }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of controls `M`, i.e. children per non-terminal node.
    pub fn branching(&self) -> usize {
        self.branching
    }

    /// Number of time steps; the tree has `steps() + 1` levels.
    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_len(&self, level: usize) -> usize {
        self.levels[level].states.len() / self.dim
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        (0..self.num_levels()).map(|n| self.level_len(n)).collect()
    }

    /// Total node count `|T|`.
    pub fn len(&self) -> usize {
        (0..self.num_levels()).map(|n| self.level_len(n)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of one level's raw storage.
    pub fn level_clone(&self, level: usize) -> Level {
        self.levels[level].clone()
    }

    /// Node where the state of `node` was first stored (the node itself
    /// unless it revisits an earlier state).
    pub fn origin(&self, node: NodeRef) -> NodeRef {
        self.levels[node.level()]
            .origins
            .get(node.index())
            .copied()
            .unwrap_or(node)
    }

    /// Number of distinct stored states. Equals [`Tree::len`] unless some
    /// nodes revisit states of earlier levels.
    pub fn distinct_len(&self) -> usize {
        self.levels
            .iter()
            .enumerate()
            .map(|(n, lvl)| {
                if lvl.origins.is_empty() {
                    lvl.states.len() / self.dim
                } else {
                    lvl.origins.iter().filter(|o| o.level() == n).count()
                }
            })
            .sum()
    }

    pub fn root(&self) -> &[f64] {
        self.state(NodeRef::ROOT)
    }

    #[inline]
    pub fn state(&self, node: NodeRef) -> &[f64] {
        let i = node.index();
        &self.levels[node.level()].states[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major states of a level.
    pub fn level_states(&self, level: usize) -> &[f64] {
        &self.levels[level].states
    }

    #[inline]
    pub fn children(&self, node: NodeRef) -> &[NodeRef] {
        let i = node.index();
        let m = self.branching;
        let ch = &self.levels[node.level()].children;
        if ch.is_empty() {
            &[]
        } else {
            &ch[i * m..(i + 1) * m]
        }
    }

    #[inline]
    pub fn child(&self, node: NodeRef, control: usize) -> NodeRef {
        self.children(node)[control]
    }

    pub fn nodes(&self, level: usize) -> impl Iterator<Item = NodeRef> {
        (0..self.level_len(level)).map(move |i| NodeRef::new(level, i))
    }

    /// True if some edge skips from level `n` to a level other than `n + 1`.
    pub fn has_cross_level_edges(&self) -> bool {
        self.levels
            .iter()
            .enumerate()
            .any(|(n, lvl)| lvl.children.iter().any(|c| c.level() != n + 1))
    }

    fn check_structure(&self) -> Result<()> {
        if self.dim == 0 || self.branching == 0 {
            return Err(TsaError::invalid("tree needs dim >= 1 and at least one control"));
        }
        let bad = |node: NodeRef, reason: String| Err(TsaError::Structure { node, reason });
        if self.levels.is_empty() {
            return bad(NodeRef::ROOT, "tree has no levels".into());
        }
        if self.levels[0].states.len() != self.dim {
            return bad(NodeRef::ROOT, "level 0 must hold exactly the initial state".into());
        }
        let last = self.levels.len() - 1;
        for (n, lvl) in self.levels.iter().enumerate() {
            if lvl.states.len() % self.dim != 0 {
                return bad(NodeRef::new(n, 0), "state storage is not a multiple of dim".into());
            }
            let count = lvl.states.len() / self.dim;
            if n < last && count == 0 {
                return bad(NodeRef::new(n, 0), "empty non-terminal level".into());
            }
            let expected = if n == last { 0 } else { count * self.branching };
            if lvl.children.len() != expected {
                return bad(
                    NodeRef::new(n, 0),
                    format!("level holds {} edges, expected {expected}", lvl.children.len()),
                );
            }
            if !lvl.origins.is_empty() && lvl.origins.len() != count {
                return bad(NodeRef::new(n, 0), "origin list does not match node count".into());
            }
            for (i, o) in lvl.origins.iter().enumerate() {
                let node = NodeRef::new(n, i);
                if o.level() > n || (o.level() == n && o.index() != i) {
                    return bad(node, format!("origin {o} is not an earlier node"));
                }
                if o.index() >= self.levels[o.level()].states.len() / self.dim {
                    return bad(node, format!("origin {o} is a dangling id"));
                }
                if self.state(*o) != self.state(node) {
                    return bad(node, format!("state differs from its origin {o}"));
                }
            }
            for (e, c) in lvl.children.iter().enumerate() {
                let parent = NodeRef::new(n, e / self.branching);
                if c.level() > n + 1 || c.level() >= self.levels.len() {
                    return bad(parent, format!("child {c} is past level bounds"));
                }
                if c.index() >= self.levels[c.level()].states.len() / self.dim {
                    return bad(parent, format!("child {c} is a dangling id"));
                }
            }
        }
        Ok(())
    }

    /// Checks structure and recomputes every edge with the stepper.
    ///
    /// A child may be any in-scope node within the merge tolerance of the
    /// exact image, so the residual is bounded by the tolerance used at
    /// construction and is zero for an unpruned tree.
    pub fn validate(
        &self,
        problem: &OcProblem,
        grid: &TimeGrid,
        controls: &ControlGrid,
        stepper: &dyn Stepper,
    ) -> Result<TreeDiagnostics> {
        self.check_structure()?;
        if controls.len() != self.branching {
            return Err(TsaError::Dimension {
                what: "control count",
                expected: self.branching,
                got: controls.len(),
            });
        }
        if grid.steps() != self.steps() {
            return Err(TsaError::Dimension {
                what: "time steps",
                expected: self.steps(),
                got: grid.steps(),
            });
        }
        let norm = problem.norm();
        let mut image = vec![0.0; self.dim];
        let mut diag = TreeDiagnostics::default();
        for n in 0..self.steps() {
            for node in self.nodes(n) {
                let x = self.state(node);
                for (j, &child) in self.children(node).iter().enumerate() {
                    stepper.step_into(x, controls.point(j), grid.time(n), &mut image);
                    let r = norm.distance(&image, self.state(child));
                    diag.edges += 1;
                    if r > diag.max_edge_residual {
                        diag.max_edge_residual = r;
                        diag.worst_edge = Some((node, j));
                    }
                }
            }
        }
        Ok(diag)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreeDiagnostics {
    pub edges: usize,
    pub max_edge_residual: f64,
    pub worst_edge: Option<(NodeRef, usize)>,
}

/// `|T| = sum_{i=0}^{N} M^i`, the node count of the unpruned tree.
pub fn full_tree_cardinality(controls: u64, steps: u64) -> Result<u64> {
    if controls == 0 {
        return Err(TsaError::invalid("control count must be >= 1"));
    }
    if controls == 1 {
        return steps.checked_add(1).ok_or(TsaError::Overflow("tree cardinality"));
    }
    let mut total: u64 = 0;
    let mut term: u64 = 1;
    for i in 0..=steps {
        total = total.checked_add(term).ok_or(TsaError::Overflow("tree cardinality"))?;
        if i < steps {
            term = term
                .checked_mul(controls)
                .ok_or(TsaError::Overflow("tree cardinality"))?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinality_examples() {
        assert_eq!(full_tree_cardinality(2, 5).unwrap(), 63);
        assert_eq!(full_tree_cardinality(2, 10).unwrap(), 2047);
        assert_eq!(full_tree_cardinality(2, 20).unwrap(), 2_097_151);
        assert_eq!(full_tree_cardinality(1, 10).unwrap(), 11);
        assert_eq!(full_tree_cardinality(3, 0).unwrap(), 1);
    }

    #[test]
    fn cardinality_matches_closed_form() {
        for m in 2u64..6 {
            for n in 0u64..12 {
                let closed = (m.pow(n as u32 + 1) - 1) / (m - 1);
                assert_eq!(full_tree_cardinality(m, n).unwrap(), closed);
            }
        }
    }

    #[test]
    fn cardinality_overflow_is_reported() {
        assert!(matches!(full_tree_cardinality(2, 64), Err(TsaError::Overflow(_))));
        assert!(matches!(full_tree_cardinality(1, u64::MAX), Err(TsaError::Overflow(_))));
        assert!(full_tree_cardinality(2, 62).is_ok());
    }

    #[test]
    fn corrupt_child_is_structural_error() {
        let levels = vec![
            Level::new(vec![0.0], vec![NodeRef::new(1, 0), NodeRef::new(2, 0)]),
            Level::new(vec![1.0], vec![]),
        ];
        match Tree::from_levels(1, 2, levels) {
            Err(TsaError::Structure { node, .. }) => assert_eq!(node, NodeRef::ROOT),
            other => panic!("expected structural error, got {other:?}"),
        }
        let levels = vec![
            Level::new(vec![0.0], vec![NodeRef::new(1, 0), NodeRef::new(1, 5)]),
            Level::new(vec![1.0], vec![]),
        ];
        assert!(matches!(
            Tree::from_levels(1, 2, levels),
            Err(TsaError::Structure { .. })
        ));
    }
}
