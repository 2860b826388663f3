use crate::tree::{NodeRef, Tree};

/// Which nodes carry a value at time index `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    /// Only the nodes of level `n`.
    NativeLevel,
    /// Every node of levels `0..=n` (autonomous dynamics).
    AutonomousExtension,
}

/// Values of one time index, stored per tree level.
#[derive(Debug, Clone)]
pub(crate) struct ValueLayer {
    pub(crate) first_level: usize,
    pub(crate) values: Vec<Vec<f64>>,
    /// Empty on the terminal layer.
    pub(crate) argmin: Vec<Vec<u32>>,
}

/// Approximations `V^n(zeta)` on tree nodes together with the minimizing
/// control index of every non-terminal entry.
#[derive(Debug, Clone)]
pub struct ValueTable {
    coverage: Coverage,
    layers: Vec<ValueLayer>,
}

impl ValueTable {
    pub(crate) fn new(coverage: Coverage, layers: Vec<ValueLayer>) -> Self {
        ValueTable { coverage, layers }
    }

    pub fn coverage(&self) -> Coverage {
        self.coverage
    }

    pub fn steps(&self) -> usize {
        self.layers.len() - 1
    }

    /// Levels holding values at time index `n`.
    pub fn levels_at(&self, n: usize) -> std::ops::RangeInclusive<usize> {
        self.layers[n].first_level..=n
    }

    pub fn covers(&self, n: usize, node: NodeRef) -> bool {
        n < self.layers.len() && self.levels_at(n).contains(&node.level())
    }

    /// `V^n(node)`, if the node is covered at time index `n`.
    pub fn value(&self, n: usize, node: NodeRef) -> Option<f64> {
        let layer = self.layers.get(n)?;
        let l = node.level().checked_sub(layer.first_level)?;
        layer.values.get(l)?.get(node.index()).copied()
    }

    /// Minimizing control index at time index `n < N`.
    pub fn argmin(&self, n: usize, node: NodeRef) -> Option<usize> {
        let layer = self.layers.get(n)?;
        let l = node.level().checked_sub(layer.first_level)?;
        layer.argmin.get(l)?.get(node.index()).map(|&j| j as usize)
    }

    /// Values of the nodes of `level` at time index `n`, in node order.
    pub fn level_values(&self, n: usize, level: usize) -> Option<&[f64]> {
        let layer = self.layers.get(n)?;
        let l = level.checked_sub(layer.first_level)?;
        layer.values.get(l).map(Vec::as_slice)
    }

    /// `V^n` on its native level `n`.
    pub fn native(&self, n: usize) -> &[f64] {
        self.level_values(n, n).expect("native level is always covered")
    }

    /// `V^0(x0)`.
    pub fn root_value(&self) -> f64 {
        self.layers[0].values[0][0]
    }

    /// Nodes covered at time index `n`, lower levels first.
    pub fn covered_nodes<'a>(&'a self, tree: &'a Tree, n: usize) -> impl Iterator<Item = NodeRef> + 'a {
        self.levels_at(n).flat_map(move |k| tree.nodes(k))
    }

    #[cfg(test)]
    pub(crate) fn set_value(&mut self, n: usize, node: NodeRef, v: f64) {
        let layer = &mut self.layers[n];
        layer.values[node.level() - layer.first_level][node.index()] = v;
    }
}
