//! CSV output of trees, value tables, trajectories and study tables.

use std::io::Write;

use crate::builder::LevelStats;
use crate::error::Result;
use crate::metrics::ConvergenceRow;
use crate::oracle::GridValue;
use crate::trajectory::Trajectory;
use crate::tree::Tree;
use crate::value::ValueTable;

fn state_header(prefix: &[&str], dim: usize, suffix: &[&str]) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((0..dim).map(|i| format!("x_{i}")))
        .chain(suffix.iter().map(|s| s.to_string()))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `level,id,x_0..x_{d-1},value,argmin_u`; `value` is `V^n` on level `n`,
/// `argmin_u` is empty on the terminal level.
pub fn write_tree_csv<W: Write>(w: W, tree: &Tree, values: Option<&ValueTable>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(state_header(&["level", "id"], tree.dim(), &["value", "argmin_u"]))?;
    let mut rec = Vec::with_capacity(tree.dim() + 4);
    for n in 0..tree.num_levels() {
        for node in tree.nodes(n) {
            rec.clear();
            rec.push(n.to_string());
            rec.push(node.index().to_string());
            rec.extend(tree.state(node).iter().map(f64::to_string));
            rec.push(opt(values.and_then(|v| v.value(n, node))));
            rec.push(
                values
                    .and_then(|v| v.argmin(n, node))
                    .map(|j| j.to_string())
                    .unwrap_or_default(),
            );
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `n,t,x_0..x_{d-1},u_index,step_cost,cumulative_cost`. The last row holds
/// the terminal state with an empty control and the terminal cost as its
/// step cost.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let dim = traj.states.first().map_or(0, Vec::len);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(state_header(
        &["n", "t"],
        dim,
        &["u_index", "step_cost", "cumulative_cost"],
    ))?;
    let mut acc = 0.0;
    for (n, x) in traj.states.iter().enumerate() {
        let (u, c) = match traj.control_indices.get(n) {
            Some(&j) => (j.to_string(), traj.step_costs[n]),
            None => (String::new(), traj.terminal_cost),
        };
        acc += c;
        let mut rec = vec![n.to_string(), traj.times[n].to_string()];
        rec.extend(x.iter().map(f64::to_string));
        rec.extend([u, c.to_string(), acc.to_string()]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `n,t,controlled,uncontrolled`: cumulative cost curves.
pub fn write_cost_curves_csv<W: Write>(
    w: W,
    times: &[f64],
    controlled: &[f64],
    uncontrolled: Option<&[f64]>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "t", "controlled", "uncontrolled"])?;
    for (n, (t, c)) in times.iter().zip(controlled).enumerate() {
        out.write_record([
            n.to_string(),
            t.to_string(),
            c.to_string(),
            opt(uncontrolled.map(|u| u[n])),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `level,nodes,candidates,merged,seconds`.
pub fn write_level_stats_csv<W: Write>(w: W, stats: &[LevelStats]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["level", "nodes", "candidates", "merged", "seconds"])?;
    for s in stats {
        out.write_record([
            s.level.to_string(),
            s.nodes.to_string(),
            s.candidates.to_string(),
            s.merged.to_string(),
            s.seconds.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `Δt,tree_nodes,cpu_seconds,err22,errinf2,order22,orderinf2`.
pub fn write_convergence_csv<W: Write>(w: W, rows: &[ConvergenceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "Δt",
        "tree_nodes",
        "cpu_seconds",
        "err22",
        "errinf2",
        "order22",
        "orderinf2",
    ])?;
    for r in rows {
        out.write_record([
            r.dt.to_string(),
            r.tree_nodes.to_string(),
            format!("{:.3}", r.cpu_seconds),
            r.err22.to_string(),
            r.errinf2.to_string(),
            opt(r.order22),
            opt(r.orderinf2),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `n,t,<method>...`: per-level errors of several methods side by side.
pub fn write_level_errors_csv<W: Write>(w: W, times: &[f64], columns: &[(&str, &[f64])]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["n".to_string(), "t".to_string()];
    header.extend(columns.iter().map(|(name, _)| name.to_string()));
    out.write_record(&header)?;
    for (n, t) in times.iter().enumerate() {
        let mut rec = vec![n.to_string(), t.to_string()];
        rec.extend(columns.iter().map(|(_, c)| opt(c.get(n).copied())));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Header row `d,dx_0..,lo_0..,hi_0..,steps` with its values, then one row
/// `n,v_0,v_1,...` per stored time index in row-major vertex order (last
/// axis fastest).
pub fn write_grid_csv<W: Write>(w: W, grid: &GridValue) -> Result<()> {
    let d = grid.dim();
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    let mut header = vec!["d".to_string()];
    header.extend((0..d).map(|i| format!("dx_{i}")));
    header.extend((0..d).map(|i| format!("lo_{i}")));
    header.extend((0..d).map(|i| format!("hi_{i}")));
    header.push("steps".into());
    out.write_record(&header)?;
    let mut meta = vec![d.to_string()];
    meta.extend(grid.spacing().iter().map(f64::to_string));
    meta.extend(grid.lower().iter().map(f64::to_string));
    meta.extend(grid.upper().iter().map(f64::to_string));
    meta.push(grid.steps().to_string());
    out.write_record(&meta)?;
    for (n, values) in grid.stored() {
        let mut rec = vec![n.to_string()];
        rec.extend(values.iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
