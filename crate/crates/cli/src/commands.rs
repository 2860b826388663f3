use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use tsa::io::{
    write_convergence_csv, write_cost_curves_csv, write_level_errors_csv, write_level_stats_csv, write_trajectory_csv,
    write_tree_csv,
};
use tsa::metrics::{err_22, err_inf2, fill_orders, relative_l2_errors, ConvergenceRow};
use tsa::oracle::{exact_value_test1, solve_sl_grid, GridDomain, GridValue, SlOptions, MAX_GRID_DIM};
use tsa::tree::full_tree_cardinality;
use tsa::{build_tree, run_benchmark, solve_for_tree, PruneConfig, TimeGrid};

use crate::config::{Config, ConfigError};

/// Unpruned comparison trees are skipped above this size unless requested.
const UNPRUNED_AUTO_LIMIT: u64 = 5_000_000;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Build, solve, synthesize and evaluate one configuration. Returns the
/// summary text that was also written to `summary.txt`.
pub fn solve(cfg: &Config) -> Result<String> {
    let b = &cfg.bench;
    let prune = cfg.prune(b.dt);
    let s = run_benchmark(b, &prune)?;
    let grid = b.time_grid()?;
    let times: Vec<f64> = (0..=grid.steps()).map(|n| grid.time(n)).collect();
    let baseline = b.controls.zero_index().is_some();

    prepare(&cfg.out_dir)?;
    if cfg.tree_csv {
        write_tree_csv(create(&cfg.out_dir, "tree.csv")?, &s.built.tree, Some(&s.values))?;
    }
    write_trajectory_csv(create(&cfg.out_dir, "trajectory.csv")?, &s.trajectory)?;
    let unc = baseline.then_some(&s.uncontrolled.functional[..]);
    write_cost_curves_csv(create(&cfg.out_dir, "cost.csv")?, &times, &s.controlled.functional, unc)?;
    let unc = baseline.then_some(&s.uncontrolled.running[..]);
    write_cost_curves_csv(
        create(&cfg.out_dir, "running_cost.csv")?,
        &times,
        &s.controlled.running,
        unc,
    )?;
    write_level_stats_csv(create(&cfg.out_dir, "level_stats.csv")?, &s.built.stats)?;

    let stats = &s.built.stats;
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(": ");
        out.push_str(&v);
        out.push('\n');
    };
    line("problem", b.problem.name().to_string());
    line("dim", b.problem.dim().to_string());
    line("controls", b.controls.len().to_string());
    line("dt", b.dt.to_string());
    line("T", b.horizon.to_string());
    line("steps", grid.steps().to_string());
    line("eps", prune.tolerance.to_string());
    line("scope", format!("{:?}", prune.scope).to_lowercase());
    line(
        "strategy",
        s.built.strategy.map_or("none".to_string(), |s| s.name().to_string()),
    );
    line("tree_nodes", s.built.cardinality().to_string());
    line("tree_entries", s.built.tree.len().to_string());
    line("merged", s.built.merged().to_string());
    line("level_nodes", join(&stats.iter().map(|l| l.nodes).collect::<Vec<_>>()));
    line(
        "level_merged",
        join(&stats.iter().map(|l| l.merged).collect::<Vec<_>>()),
    );
    line("build_seconds", format!("{:.3}", s.build_seconds));
    line("solve_seconds", format!("{:.3}", s.solve_seconds));
    line("cpu_seconds", format!("{:.3}", s.build_seconds + s.solve_seconds));
    line("value_root", s.values.root_value().to_string());
    line("controlled_cost", s.controlled.total.to_string());
    if baseline {
        line("uncontrolled_cost", s.uncontrolled.total.to_string());
    }
    fs::write(cfg.out_dir.join("summary.txt"), &out)
        .with_context(|| format!("cannot write summary in {}", cfg.out_dir.display()))?;
    Ok(out)
}

/// Convergence table against the closed-form Test 1 value function.
pub fn convergence(cfg: &Config) -> Result<String> {
    if cfg.bench.problem.name() != "test1" {
        return Err(ConfigError {
            key: "problem".into(),
            message: format!(
                "'{}' has no closed-form reference; convergence needs test1",
                cfg.bench.problem.name()
            ),
        }
        .into());
    }
    let dts = cfg.dts.clone().unwrap_or_else(|| vec![0.2, 0.1, 0.05]);
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in &dts {
        let mut b = cfg.bench.clone();
        b.dt = dt;
        let grid = b.time_grid().map_err(|e| ConfigError {
            key: "dts".into(),
            message: e.to_string(),
        })?;
        let stepper = b.stepper()?;
        let horizon = grid.horizon();
        let start = Instant::now();
        let built = build_tree(&b.problem, stepper.as_ref(), &grid, &b.controls, &b.x0, &cfg.prune(dt))?;
        let values = solve_for_tree(&built.tree, &b.problem, &grid, &b.controls)?;
        let cpu_seconds = start.elapsed().as_secs_f64();
        let errors = relative_l2_errors(&built.tree, &values, |n, _, x| {
            exact_value_test1(x, grid.time(n), horizon)
        })?;
        rows.push(ConvergenceRow {
            dt,
            tree_nodes: built.cardinality(),
            cpu_seconds,
            err22: err_22(&errors, dt),
            errinf2: err_inf2(&errors),
            order22: None,
            orderinf2: None,
        });
    }
    fill_orders(&mut rows)?;
    prepare(&cfg.out_dir)?;
    write_convergence_csv(create(&cfg.out_dir, "convergence.csv")?, &rows)?;
    let mut buf = Vec::new();
    write_convergence_csv(&mut buf, &rows)?;
    Ok(String::from_utf8(buf)?)
}

struct Oracle {
    grid: GridValue,
    stride: usize,
}

fn oracle(cfg: &Config, grid: &TimeGrid, bounds: &[(f64, f64)]) -> Result<Oracle> {
    let b = &cfg.bench;
    let dim = b.problem.dim();
    if dim > MAX_GRID_DIM {
        return Err(ConfigError {
            key: "problem".into(),
            message: format!(
                "the grid oracle supports dimension <= {MAX_GRID_DIM}, '{}' has {dim}",
                b.problem.name()
            ),
        }
        .into());
    }
    let dx = cfg.oracle_dx.unwrap_or(b.dt);
    let odt = cfg.oracle_dt.unwrap_or(dx.min(b.dt));
    let ratio = b.dt / odt;
    let stride = ratio.round() as usize;
    if stride == 0 || (ratio - stride as f64).abs() > 1e-9 * ratio {
        return Err(ConfigError {
            key: "oracle_dt".into(),
            message: format!("{odt} must divide dt = {}", b.dt),
        }
        .into());
    }
    let snap = |v: f64, up: bool| {
        let k = v / dx;
        (if up { k.ceil() } else { k.floor() }) * dx
    };
    let (lower, upper): (Vec<f64>, Vec<f64>) = match cfg.oracle_box {
        Some((lo, hi)) => (vec![snap(lo, false); dim], vec![snap(hi, true); dim]),
        None => bounds
            .iter()
            .map(|&(lo, hi)| (snap(lo - 1.0, false), snap(hi + 1.0, true)))
            .unzip(),
    };
    let domain = GridDomain::new(&lower, &upper, &vec![dx; dim]).map_err(|e| ConfigError {
        key: "oracle_box".into(),
        message: e.to_string(),
    })?;
    let fine = TimeGrid::new(grid.t0(), grid.horizon(), grid.steps() * stride)?;
    let g = solve_sl_grid(
        &b.problem,
        &domain,
        &fine,
        &b.controls,
        SlOptions { store_every: stride },
    )?;
    Ok(Oracle { grid: g, stride })
}

/// Per-level errors of the pruned and unpruned trees (and, for Test 1, the
/// grid oracle) against the best available reference.
pub fn compare(cfg: &Config) -> Result<String> {
    let b = &cfg.bench;
    let grid = b.time_grid()?;
    let stepper = b.stepper()?;
    let exact = b.problem.name() == "test1";
    let horizon = grid.horizon();

    let mut trees = Vec::new();
    let pruned = cfg.prune(b.dt);
    let full = full_tree_cardinality(b.controls.len() as u64, grid.steps() as u64).unwrap_or(u64::MAX);
    let want_unpruned = cfg
        .unpruned
        .unwrap_or(full <= UNPRUNED_AUTO_LIMIT.min(cfg.max_nodes as u64));
    let mut variants = vec![("tsa_pruned", pruned.clone())];
    if want_unpruned {
        variants.push(("tsa_unpruned", PruneConfig::unpruned().max_nodes(cfg.max_nodes)));
    }
    for (name, prune) in variants {
        let built = build_tree(&b.problem, stepper.as_ref(), &grid, &b.controls, &b.x0, &prune)?;
        let values = solve_for_tree(&built.tree, &b.problem, &grid, &b.controls)?;
        trees.push((name, built, values));
    }

    let dim = b.problem.dim();
    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
    for (_, built, _) in &trees {
        for n in 0..built.tree.num_levels() {
            for node in built.tree.nodes(n) {
                for (k, &v) in built.tree.state(node).iter().enumerate() {
                    bounds[k].0 = bounds[k].0.min(v);
                    bounds[k].1 = bounds[k].1.max(v);
                }
            }
        }
    }
    let sl = if exact && dim > MAX_GRID_DIM {
        None
    } else {
        Some(oracle(cfg, &grid, &bounds)?)
    };

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut dirty = 0usize;
    for (name, built, values) in &trees {
        let errs = if exact {
            relative_l2_errors(&built.tree, values, |n, _, x| {
                exact_value_test1(x, grid.time(n), horizon)
            })?
        } else {
            let o = sl.as_ref().expect("oracle present");
            for n in 0..=grid.steps() {
                dirty += values
                    .covered_nodes(&built.tree, n)
                    .filter(|&node| !o.grid.is_clean(o.stride * n, built.tree.state(node)))
                    .count();
            }
            relative_l2_errors(&built.tree, values, |n, _, x| {
                o.grid.interpolate(o.stride * n, x).unwrap_or(f64::NAN)
            })?
        };
        columns.push((name.to_string(), errs));
    }
    if exact {
        if let Some(o) = &sl {
            let (_, built, values) = &trees[0];
            let mut errs = Vec::with_capacity(grid.steps() + 1);
            for n in 0..=grid.steps() {
                let mut approx = Vec::new();
                let mut reference = Vec::new();
                for node in values.covered_nodes(&built.tree, n) {
                    let x = built.tree.state(node);
                    if !o.grid.is_clean(o.stride * n, x) {
                        dirty += 1;
                    }
                    approx.push(o.grid.interpolate(o.stride * n, x)?);
                    reference.push(exact_value_test1(x, grid.time(n), horizon));
                }
                errs.push(tsa::metrics::relative_l2_error(&approx, &reference)?);
            }
            columns.push(("sl".to_string(), errs));
        }
    }
    if columns.iter().any(|(_, c)| c.iter().any(|e| !e.is_finite())) {
        bail!(tsa::TsaError::NonFiniteValue("per-level error".into()));
    }

    let times: Vec<f64> = (0..=grid.steps()).map(|n| grid.time(n)).collect();
    let refs: Vec<(&str, &[f64])> = columns.iter().map(|(n, c)| (n.as_str(), &c[..])).collect();
    prepare(&cfg.out_dir)?;
    write_level_errors_csv(create(&cfg.out_dir, "compare.csv")?, &times, &refs)?;

    let mut out = String::new();
    out.push_str(&format!(
        "reference: {}\n",
        if exact {
            "closed-form value function"
        } else {
            "semi-Lagrangian grid"
        }
    ));
    for ((name, c), tree) in columns
        .iter()
        .zip(trees.iter().map(|t| Some(t.1.cardinality())).chain([None]))
    {
        let max = c.iter().cloned().fold(0.0, f64::max);
        match tree {
            Some(nodes) => out.push_str(&format!(
                "{name}: nodes {nodes}, max E2 {max:.5}, Err22 {:.5}\n",
                err_22(c, b.dt)
            )),
            None => out.push_str(&format!("{name}: max E2 {max:.5}, Err22 {:.5}\n", err_22(c, b.dt))),
        }
    }
    if sl.is_some() {
        out.push_str(&format!("oracle_clamped_nodes: {dirty}\n"));
        if dirty > 0 {
            eprintln!("warning: {dirty} compared nodes depend on clamped oracle values; widen oracle_box");
        }
    }
    fs::write(cfg.out_dir.join("compare_summary.txt"), &out)?;
    Ok(out)
}
