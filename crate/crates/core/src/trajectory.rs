use crate::tree::NodeRef;

/// Optimal path obtained by descending the tree.
///
/// `states[n]` is the tree node reached at step `n`. With pruning it may sit
/// up to the merge tolerance away from the exact stepper image of
/// `states[n - 1]`; without pruning the two coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub nodes: Vec<NodeRef>,
    pub control_indices: Vec<usize>,
    /// `e^{-lambda (t_n - t0)} dt L(states[n], u_n, t_n)`.
    pub step_costs: Vec<f64>,
    /// `e^{-lambda (T - t0)} g(states[N])`.
    pub terminal_cost: f64,
    pub total_cost: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.control_indices.len()
    }

    /// Running cost accumulated up to each grid time, starting at 0.
    pub fn cumulative_costs(&self) -> Vec<f64> {
        let mut acc = 0.0;
        std::iter::once(0.0)
            .chain(self.step_costs.iter().map(|c| {
                acc += c;
                acc
            }))
            .collect()
    }
}
