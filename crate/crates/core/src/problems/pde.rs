use crate::error::{Result, TsaError};
use crate::problem::{OcProblem, StateNorm};
use crate::stepper::{LinearAffineDynamics, LinearOperator, Tridiagonal};

use super::{CostSpec, Phi};

/// A semi-discretized PDE with its initial state and interior grid.
#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub problem: OcProblem,
    pub x0: Vec<f64>,
    /// Interior points `x_i = i dx`, `i = 1..=d`.
    pub points: Vec<f64>,
    pub dx: f64,
}

/// Initial profile of the heat equation; it also shapes the control input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatProfile {
    /// `y0(x) = x - x^2`.
    Smooth,
    /// Indicator of `[0.25, 0.75]`.
    Indicator,
}

impl HeatProfile {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            HeatProfile::Smooth => -x * x + x,
            HeatProfile::Indicator => {
                if (0.25..=0.75).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            HeatProfile::Smooth => "heat-smooth",
            HeatProfile::Indicator => "heat-indicator",
        }
    }
}

fn interior(d: usize) -> (f64, Vec<f64>) {
    let dx = 1.0 / (d + 1) as f64;
    (dx, (1..=d).map(|i| i as f64 * dx).collect())
}

/// `y' = (sigma / dx^2) tridiag(1, -2, 1) y + y0(x_i) u` on `(0, 1)` with
/// homogeneous Dirichlet conditions, `dx = 1/(d+1)`, and cost
/// `int dx|y|^2 + 0.01 u^2 + dx|y(T)|^2`.
pub fn heat_semidiscretization(d: usize, sigma: f64, profile: HeatProfile) -> Result<PdeProblem> {
    if d < 2 {
        return Err(TsaError::invalid(format!(
            "heat equation needs d >= 2 interior points, got {d}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(TsaError::invalid(format!("diffusivity must be positive, got {sigma}")));
    }
    let (dx, points) = interior(d);
    let a = Tridiagonal::laplacian(d, sigma / (dx * dx))?;
    let b: Vec<f64> = points.iter().map(|&x| profile.eval(x)).collect();
    let dynamics = LinearAffineDynamics::single_input(LinearOperator::Tridiagonal(a), b.clone())?;
    let norm = StateNorm::Weighted { weight: dx };
    let (l, g) = CostSpec::quadratic(1.0, 1.0, 0.01)?.with_norm(norm).attach();
    let problem = OcProblem::linear(profile.name(), dynamics, l, g)?.with_norm(norm)?;
    Ok(PdeProblem {
        problem,
        x0: b,
        points,
        dx,
    })
}

/// `w'' = c w_xx + chi_actuator(x) u` written as `y = (w, w')`,
/// `y' = [[0, I], [c D2, 0]] y + (0, chi) u`, with `w(0) = sin(pi x)`,
/// `w'(0) = 0`, cost `int phi(dx|y|^2) + 0.01 u^2 + phi(dx|y(T)|^2)`.
pub fn wave_semidiscretization(d: usize, c: f64, actuator: (f64, f64), phi: Phi) -> Result<PdeProblem> {
    if d < 2 {
        return Err(TsaError::invalid(format!(
            "wave equation needs d >= 2 interior points, got {d}"
        )));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(TsaError::invalid(format!("wave speed must be positive, got {c}")));
    }
    let (lo, hi) = actuator;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(TsaError::invalid(format!(
            "actuator interval ({lo}, {hi}) must lie inside (0, 1)"
        )));
    }
    let (dx, points) = interior(d);
    let k = Tridiagonal::laplacian(d, c / (dx * dx))?;
    let mut b = vec![0.0; 2 * d];
    for (i, &x) in points.iter().enumerate() {
        if lo < x && x < hi {
            b[d + i] = 1.0;
        }
    }
    let dynamics = LinearAffineDynamics::single_input(LinearOperator::SecondOrder(k), b)?;
    let norm = StateNorm::Weighted { weight: dx };
    let (l, g) = CostSpec::quadratic(1.0, 1.0, 0.01)?
        .with_phi(phi)
        .with_norm(norm)
        .attach();
    let name = match phi {
        Phi::Identity => "wave-quadratic",
        Phi::NonQuadratic => "wave-phi",
    };
    let problem = OcProblem::linear(name, dynamics, l, g)?.with_norm(norm)?;
    let mut x0 = vec![0.0; 2 * d];
    for (i, &x) in points.iter().enumerate() {
        x0[i] = (std::f64::consts::PI * x).sin();
    }
    Ok(PdeProblem {
        problem,
        x0,
        points,
        dx,
    })
}
