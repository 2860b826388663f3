//! Reference solutions: semi-Lagrangian grid scheme, the closed-form
//! Test 1 value function and exhaustive enumeration.

mod sl;

pub use sl::{interpolate, multilinear_interpolate, solve_sl_grid, GridDomain, GridValue, SlOptions, MAX_GRID_DIM};

use crate::controls::ControlGrid;
use crate::error::{Result, TsaError};
use crate::problem::OcProblem;
use crate::stepper::Stepper;
use crate::time::TimeGrid;

/// Largest number of control sequences [`brute_force_dp`] will enumerate.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// `v(x, t) = -x2 - x1^2 (T - t) - (T - t)^3 / 3 - |x1| (T - t)^2`.
pub fn exact_value_test1(x: &[f64], t: f64, horizon: f64) -> f64 {
    let s = horizon - t;
    -x[1] - x[0] * x[0] * s - s * s * s / 3.0 - x[0].abs() * s * s
}

/// Minimum discrete cost over all `M^N` control sequences, each simulated
/// with `stepper` from `x0`.
pub fn brute_force_dp(
    problem: &OcProblem,
    x0: &[f64],
    grid: &TimeGrid,
    controls: &ControlGrid,
    stepper: &dyn Stepper,
) -> Result<f64> {
    problem.check_controls(controls)?;
    problem.check_state("initial state", x0)?;
    let m = controls.len();
    let steps = grid.steps();
    let requested = (m as u128).checked_pow(steps as u32).unwrap_or(u128::MAX);
    if steps > u32::MAX as usize || requested > ENUMERATION_CAP {
        return Err(TsaError::EnumerationCap {
            requested,
            cap: ENUMERATION_CAP,
        });
    }
    let dt = grid.dt();
    let lambda = problem.discount();
    let terminal_weight = (-lambda * (grid.horizon() - grid.t0())).exp();
    let mut seq = vec![0usize; steps];
    let mut best = f64::INFINITY;
    for _ in 0..requested {
        let mut x = x0.to_vec();
        let mut cost = 0.0;
        for (n, &j) in seq.iter().enumerate() {
            let t = grid.time(n);
            let u = controls.point(j);
            cost += (-lambda * (t - grid.t0())).exp() * dt * problem.running_cost(&x, u, t);
            x = stepper.step(&x, u, t)?;
        }
        cost += terminal_weight * problem.terminal_cost(&x);
        if cost < best {
            best = cost;
        }
        // odometer, last step fastest
        for k in (0..steps).rev() {
            seq[k] += 1;
            if seq[k] < m {
                break;
            }
            seq[k] = 0;
        }
    }
    Ok(best)
}
