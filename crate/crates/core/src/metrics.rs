//! Error norms and convergence orders.

use crate::error::{Result, TsaError};
use crate::tree::{NodeRef, Tree};
use crate::value::ValueTable;

/// Pairwise (cascade) summation. The result depends only on the order of
/// the input, never on threading.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `sqrt(sum |ref - approx|^2 / sum |ref|^2)` over matched pairs.
pub fn relative_l2_error(approx: &[f64], reference: &[f64]) -> Result<f64> {
    if approx.len() != reference.len() {
        return Err(TsaError::Dimension {
            what: "reference values",
            expected: approx.len(),
            got: reference.len(),
        });
    }
    let num: Vec<f64> = approx.iter().zip(reference).map(|(a, r)| (r - a) * (r - a)).collect();
    let den: Vec<f64> = reference.iter().map(|r| r * r).collect();
    let (num, den) = (pairwise_sum(&num), pairwise_sum(&den));
    if !(den > 0.0) {
        return Err(TsaError::invalid("relative error: reference is identically zero"));
    }
    let e = (num / den).sqrt();
    if !e.is_finite() {
        return Err(TsaError::NonFiniteValue("relative error".into()));
    }
    Ok(e)
}

/// `E_2(t_n)`: relative error of `V^n` against `reference` over the nodes
/// covered at time index `n` (level `n`, or levels `0..=n` for an extended
/// table). `reference(node, state)` must return `v(state, t_n)`.
pub fn relative_l2_error_level<F>(tree: &Tree, values: &ValueTable, n: usize, reference: F) -> Result<f64>
where
    F: Fn(NodeRef, &[f64]) -> f64,
{
    let mut approx = Vec::new();
    let mut exact = Vec::new();
    for node in values.covered_nodes(tree, n) {
        approx.push(values.value(n, node).expect("covered node has a value"));
        exact.push(reference(node, tree.state(node)));
    }
    relative_l2_error(&approx, &exact)
}

/// `E_2(t_n)` for every `n = 0..=N`; `reference(n, node, state)` is
/// `v(state, t_n)`.
pub fn relative_l2_errors<F>(tree: &Tree, values: &ValueTable, reference: F) -> Result<Vec<f64>>
where
    F: Fn(usize, NodeRef, &[f64]) -> f64,
{
    (0..=values.steps())
        .map(|n| relative_l2_error_level(tree, values, n, |node, x| reference(n, node, x)))
        .collect()
}

/// `Err_{2,2} = sqrt(dt * sum_n E_2(t_n)^2)`.
pub fn err_22(errors: &[f64], dt: f64) -> f64 {
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    (dt * pairwise_sum(&sq)).sqrt()
}

/// `Err_{inf,2} = max_n E_2(t_n)`.
pub fn err_inf2(errors: &[f64]) -> f64 {
    errors.iter().copied().fold(0.0, f64::max)
}

/// `log2(err(dt) / err(dt/2))`.
pub fn convergence_order(coarse: f64, fine: f64) -> Result<f64> {
    convergence_order_ratio(coarse, fine, 2.0)
}

/// Order between two runs whose step sizes differ by `step_ratio > 1`:
/// `ln(coarse / fine) / ln(step_ratio)`.
pub fn convergence_order_ratio(coarse: f64, fine: f64, step_ratio: f64) -> Result<f64> {
    if !(coarse > 0.0 && fine > 0.0) || !coarse.is_finite() || !fine.is_finite() {
        return Err(TsaError::invalid(format!(
            "convergence order needs positive errors, got {coarse} and {fine}"
        )));
    }
    if !(step_ratio > 1.0) || !step_ratio.is_finite() {
        return Err(TsaError::invalid(format!("step ratio must exceed 1, got {step_ratio}")));
    }
    Ok((coarse / fine).ln() / step_ratio.ln())
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub tree_nodes: usize,
    pub cpu_seconds: f64,
    pub err22: f64,
    pub errinf2: f64,
    pub order22: Option<f64>,
    pub orderinf2: Option<f64>,
}

/// Fills in the order columns from consecutive rows (ordered by decreasing
/// `dt`). Step ratios other than 2 use the generalized formula.
pub fn fill_orders(rows: &mut [ConvergenceRow]) -> Result<()> {
    for i in 1..rows.len() {
        let ratio = rows[i - 1].dt / rows[i].dt;
        if !(ratio > 1.0) {
            return Err(TsaError::invalid(format!(
                "step sizes must strictly decrease, got {} then {}",
                rows[i - 1].dt,
                rows[i].dt
            )));
        }
        rows[i].order22 = Some(convergence_order_ratio(rows[i - 1].err22, rows[i].err22, ratio)?);
        rows[i].orderinf2 = Some(convergence_order_ratio(rows[i - 1].errinf2, rows[i].errinf2, ratio)?);
    }
    Ok(())
}
