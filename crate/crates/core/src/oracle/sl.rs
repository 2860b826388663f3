use rayon::prelude::*;

use crate::controls::ControlGrid;
use crate::error::{Result, TsaError};
use crate::problem::OcProblem;
use crate::time::TimeGrid;

/// Grid methods are only used for validation.
pub const MAX_GRID_DIM: usize = 3;

/// Axis-aligned box with uniform per-axis spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    spacing: Vec<f64>,
    counts: Vec<usize>,
}

impl GridDomain {
    /// `upper - lower` must be an integer multiple of `spacing` on every
    /// axis (up to rounding).
    pub fn new(lower: &[f64], upper: &[f64], spacing: &[f64]) -> Result<Self> {
        let d = lower.len();
        if d == 0 || d > MAX_GRID_DIM {
            return Err(TsaError::invalid(format!(
                "grid dimension must be in 1..={MAX_GRID_DIM}, got {d}"
            )));
        }
        if upper.len() != d || spacing.len() != d {
            return Err(TsaError::Dimension {
                what: "grid bounds",
                expected: d,
                got: upper.len().min(spacing.len()),
            });
        }
        let mut counts = Vec::with_capacity(d);
        for i in 0..d {
            let (lo, hi, h) = (lower[i], upper[i], spacing[i]);
            if !(lo.is_finite() && hi.is_finite() && h.is_finite() && hi > lo && h > 0.0) {
                return Err(TsaError::invalid(format!("bad grid axis {i}: [{lo}, {hi}] step {h}")));
            }
            let cells = (hi - lo) / h;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-8 * cells.max(1.0) {
                return Err(TsaError::invalid(format!(
                    "axis {i}: spacing {h} does not divide [{lo}, {hi}]"
                )));
            }
            counts.push(rounded as usize + 1);
        }
        Ok(GridDomain {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            spacing: spacing.to_vec(),
            counts,
        })
    }

    /// Same box and spacing on every axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, spacing: f64) -> Result<Self> {
        GridDomain::new(&vec![lo; dim], &vec![hi; dim], &vec![spacing; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_vertices(&self) -> usize {
        self.counts.iter().product()
    }

    /// Coordinates of vertex `flat` (row-major, last axis fastest).
    pub fn vertex(&self, mut flat: usize, out: &mut [f64]) {
        for i in (0..self.dim()).rev() {
            let k = flat % self.counts[i];
            flat /= self.counts[i];
            out[i] = self.lower[i] + k as f64 * self.spacing[i];
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Clamps `x` into the box; returns whether any coordinate moved.
    fn clamp(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            if *v < *lo {
                *v = *lo;
                moved = true;
            } else if *v > *hi {
                *v = *hi;
                moved = true;
            }
        }
        moved
    }

    /// Visits the `2^d` vertices enclosing `x` (clamped to the box) with
    /// their multilinear weights.
    fn for_each_corner(&self, x: &[f64], mut visit: impl FnMut(usize, f64)) {
        let d = self.dim();
        let mut base = [0usize; MAX_GRID_DIM];
        let mut frac = [0.0; MAX_GRID_DIM];
        for i in 0..d {
            let s = ((x[i] - self.lower[i]) / self.spacing[i]).clamp(0.0, (self.counts[i] - 1) as f64);
            let k = (s.floor() as usize).min(self.counts[i] - 2);
            base[i] = k;
            frac[i] = s - k as f64;
        }
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for i in 0..d {
                let up = (corner >> (d - 1 - i)) & 1;
                w *= if up == 1 { frac[i] } else { 1.0 - frac[i] };
                flat = flat * self.counts[i] + base[i] + up;
            }
            visit(flat, w);
        }
    }

    fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_corner(x, |k, w| {
            if w != 0.0 {
                acc += w * values[k];
            }
        });
        acc
    }
}

/// Multilinear interpolation of vertex `values` (row-major) at `x`; points
/// outside the box are clamped.
pub fn interpolate(domain: &GridDomain, values: &[f64], x: &[f64]) -> Result<f64> {
    if x.len() != domain.dim() {
        return Err(TsaError::Dimension {
            what: "interpolation point",
            expected: domain.dim(),
            got: x.len(),
        });
    }
    if values.len() != domain.num_vertices() {
        return Err(TsaError::Dimension {
            what: "grid values",
            expected: domain.num_vertices(),
            got: values.len(),
        });
    }
    let mut bad = None;
    domain.for_each_corner(x, |k, _| {
        if !values[k].is_finite() {
            bad = Some(k);
        }
    });
    if let Some(k) = bad {
        return Err(TsaError::NonFiniteValue(format!("grid vertex {k}")));
    }
    Ok(domain.interpolate(values, x))
}

/// Options of the semi-Lagrangian solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlOptions {
    /// Keep `V^n` only for `n` divisible by this (and always `n = 0, N`).
    pub store_every: usize,
}

impl Default for SlOptions {
    fn default() -> Self {
        SlOptions { store_every: 1 }
    }
}

/// Semi-Lagrangian value function on a grid.
///
/// Vertices whose value depends, through any control, on a foot point that
/// had to be clamped to the box are marked tainted.
#[derive(Debug, Clone)]
pub struct GridValue {
    domain: GridDomain,
    time: TimeGrid,
    stored: Vec<(usize, Vec<f64>)>,
    tainted: Vec<Vec<bool>>,
    clamp_events: u64,
}

impl GridValue {
    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn spacing(&self) -> &[f64] {
        self.domain.spacing()
    }

    pub fn lower(&self) -> &[f64] {
        self.domain.lower()
    }

    pub fn upper(&self) -> &[f64] {
        self.domain.upper()
    }

    pub fn steps(&self) -> usize {
        self.time.steps()
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    /// Foot points clamped to the box over the whole sweep.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    /// Stored time indices with their vertex values.
    pub fn stored(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.stored.iter().map(|(n, v)| (*n, v.as_slice()))
    }

    fn slot(&self, n: usize) -> Option<usize> {
        self.stored.binary_search_by_key(&n, |(k, _)| *k).ok()
    }

    pub fn level(&self, n: usize) -> Option<&[f64]> {
        self.slot(n).map(|s| self.stored[s].1.as_slice())
    }

    /// `I[V^n](x)`.
    pub fn interpolate(&self, n: usize, x: &[f64]) -> Result<f64> {
        let values = self
            .level(n)
            .ok_or_else(|| TsaError::invalid(format!("time index {n} was not stored")))?;
        interpolate(&self.domain, values, x)
    }

    /// Whether the interpolated value at `x` is free of boundary clamping:
    /// `x` lies in the box and no enclosing vertex is tainted.
    pub fn is_clean(&self, n: usize, x: &[f64]) -> bool {
        let Some(s) = self.slot(n) else { return false };
        if !self.domain.contains(x) {
            return false;
        }
        let taint = &self.tainted[s];
        let mut clean = true;
        self.domain.for_each_corner(x, |k, w| {
            if w != 0.0 && taint[k] {
                clean = false;
            }
        });
        clean
    }
}

/// `multilinear_interpolate(grid, n, x)`.
pub fn multilinear_interpolate(grid: &GridValue, n: usize, x: &[f64]) -> Result<f64> {
    grid.interpolate(n, x)
}

/// Backward semi-Lagrangian sweep
/// `V^n_i = min_u [dt L(x_i, u, t_n) + e^{-lambda dt} I[V^{n+1}](x_i + dt f(x_i, u, t_n))]`
/// with `V^N_i = g(x_i)`.
pub fn solve_sl_grid(
    problem: &OcProblem,
    domain: &GridDomain,
    time: &TimeGrid,
    controls: &ControlGrid,
    options: SlOptions,
) -> Result<GridValue> {
    let d = domain.dim();
    if problem.dim() != d {
        return Err(TsaError::Dimension {
            what: "grid dimension",
            expected: problem.dim(),
            got: d,
        });
    }
    problem.check_controls(controls)?;
    if options.store_every == 0 {
        return Err(TsaError::invalid("store_every must be positive"));
    }
    let steps = time.steps();
    let dt = time.dt();
    let discount = problem.step_discount(dt);
    let nv = domain.num_vertices();
    let keep = |n: usize| n == 0 || n == steps || n.is_multiple_of(options.store_every);

    let mut next: Vec<f64> = (0..nv)
        .into_par_iter()
        .map_init(
            || vec![0.0; d],
            |x, i| {
                domain.vertex(i, x);
                problem.terminal_cost(x)
            },
        )
        .collect();
    if let Some(i) = next.iter().position(|v| !v.is_finite()) {
        return Err(TsaError::NonFiniteValue(format!("terminal cost at grid vertex {i}")));
    }
    let mut next_taint = vec![false; nv];
    let mut stored = Vec::new();
    let mut tainted = Vec::new();
    if keep(steps) {
        stored.push((steps, next.clone()));
        tainted.push(next_taint.clone());
    }
    let mut clamp_events = 0u64;

    for n in (0..steps).rev() {
        let t = time.time(n);
        let rows: Vec<(f64, bool, u32)> = (0..nv)
            .into_par_iter()
            .map_init(
                || (vec![0.0; d], vec![0.0; d], vec![0.0; d]),
                |(x, f, foot), i| {
                    domain.vertex(i, x);
                    let mut best = f64::INFINITY;
                    let mut taint = false;
                    let mut clamps = 0u32;
                    for u in controls.iter() {
                        problem.dynamics_into(x, u, t, f);
                        for k in 0..d {
                            foot[k] = x[k] + dt * f[k];
                        }
                        if domain.clamp(foot) {
                            clamps += 1;
                            taint = true;
                        }
                        let mut v = 0.0;
                        domain.for_each_corner(foot, |k, w| {
                            if w != 0.0 {
                                v += w * next[k];
                                taint |= next_taint[k];
                            }
                        });
                        let q = dt * problem.running_cost(x, u, t) + discount * v;
                        if q < best {
                            best = q;
                        }
                    }
                    (best, taint, clamps)
                },
            )
            .collect();
        let mut current = Vec::with_capacity(nv);
        let mut taint = Vec::with_capacity(nv);
        for (i, (v, tn, c)) in rows.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(TsaError::NonFiniteValue(format!("grid vertex {i} at time index {n}")));
            }
            current.push(v);
            taint.push(tn);
            clamp_events += u64::from(c);
        }
        if keep(n) {
            stored.push((n, current.clone()));
            tainted.push(taint.clone());
        }
        next = current;
        next_taint = taint;
    }
    stored.reverse();
    tainted.reverse();
    Ok(GridValue {
        domain: domain.clone(),
        time: *time,
        stored,
        tainted,
        clamp_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

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
    }

    #[test]
    fn vertex_layout_is_row_major() {
        let g = GridDomain::new(&[0.0, 10.0], &[1.0, 12.0], &[0.5, 1.0]).unwrap();
        assert_eq!(g.counts(), &[3, 3]);
        let mut x = [0.0; 2];
        g.vertex(1, &mut x);
        assert_eq!(x, [0.0, 11.0]);
        g.vertex(3, &mut x);
        assert_eq!(x, [0.5, 10.0]);
    }

    #[test]
    fn spacing_must_divide() {
        assert!(GridDomain::new(&[0.0], &[1.0], &[0.3]).is_err());
        assert!(GridDomain::new(&[0.0; 4], &[1.0; 4], &[0.5; 4]).is_err());
        assert!(GridDomain::cube(2, -3.0, 3.0, 0.01).is_ok());
    }

    #[test]
    fn interpolation_reproduces_vertices_and_midpoints() {
        let g = GridDomain::new(&[0.0], &[1.0], &[1.0]).unwrap();
        assert_eq!(interpolate(&g, &[0.0, 1.0], &[0.5]).unwrap(), 0.5);
        assert_eq!(interpolate(&g, &[0.0, 1.0], &[1.0]).unwrap(), 1.0);
        let g2 = GridDomain::cube(2, 0.0, 2.0, 1.0).unwrap();
        let vals: Vec<f64> = (0..9).map(f64::from).collect();
        let mut x = [0.0; 2];
        for (i, v) in vals.iter().enumerate() {
            g2.vertex(i, &mut x);
            assert_eq!(interpolate(&g2, &vals, &x).unwrap(), *v);
        }
    }

    #[test]
    fn nan_vertex_rejected() {
        let g = GridDomain::new(&[0.0], &[2.0], &[1.0]).unwrap();
        assert!(interpolate(&g, &[0.0, f64::NAN, 1.0], &[0.5]).is_err());
        assert_eq!(interpolate(&g, &[0.0, 1.0, f64::NAN], &[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn constant_terminal_cost_is_preserved() {
        let p = OcProblem::new(
            "c",
            2,
            1,
            |x, u, _t, o| {
                o[0] = u[0] * x[1];
                o[1] = -x[0];
            },
            |_, _, _| 0.0,
            |_| 3.5,
        )
        .unwrap();
        let dom = GridDomain::cube(2, -1.0, 1.0, 0.25).unwrap();
        let time = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        let g = solve_sl_grid(&p, &dom, &time, &c, SlOptions::default()).unwrap();
        for (_, v) in g.stored() {
            assert!(v.iter().all(|&x| (x - 3.5).abs() < 1e-14));
        }
    }

    #[test]
    fn one_step_hand_evaluation() {
        let p = test1();
        let dom = GridDomain::cube(2, -2.0, 2.0, 0.05).unwrap();
        let time = TimeGrid::new(0.0, 0.05, 1).unwrap();
        let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        let g = solve_sl_grid(&p, &dom, &time, &c, SlOptions::default()).unwrap();
        // x = (0.5, 0.25): foot points (0.5 +- 0.05, 0.25 + 0.0125); g = -x2 is
        // affine so interpolation is exact.
        let v = g.interpolate(0, &[0.5, 0.25]).unwrap();
        assert!((v - (-(0.25 + 0.05 * 0.25))).abs() < 1e-12);
        assert!(g.is_clean(0, &[0.5, 0.25]));
    }

    #[test]
    fn clamping_taints_boundary() {
        let p = test1();
        let dom = GridDomain::cube(2, -1.0, 1.0, 0.1).unwrap();
        let time = TimeGrid::new(0.0, 0.2, 2).unwrap();
        let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        let g = solve_sl_grid(&p, &dom, &time, &c, SlOptions::default()).unwrap();
        assert!(g.clamp_events() > 0);
        assert!(!g.is_clean(0, &[1.0, 0.0]));
        assert!(!g.is_clean(0, &[0.0, 1.0]));
        assert!(g.is_clean(0, &[0.0, 0.0]));
        assert!(!g.is_clean(0, &[2.0, 0.0]));
    }

    #[test]
    fn store_stride_keeps_requested_levels() {
        let p = test1();
        let dom = GridDomain::cube(2, -1.0, 1.0, 0.5).unwrap();
        let time = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let c = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        let g = solve_sl_grid(&p, &dom, &time, &c, SlOptions { store_every: 5 }).unwrap();
        let kept: Vec<usize> = g.stored().map(|(n, _)| n).collect();
        assert_eq!(kept, vec![0, 5, 10]);
        assert!(g.interpolate(3, &[0.0, 0.0]).is_err());
    }
}
