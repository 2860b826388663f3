//! Finite-horizon optimal control problem definitions.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, TsaError};
use crate::stepper::LinearAffineDynamics;

/// `f(x, u, t)` written into the output slice.
pub type DynamicsFn = dyn Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync;
/// Running cost `L(x, u, t)`.
pub type RunningCostFn = dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync;
/// Terminal cost `g(x)`.
pub type TerminalCostFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Norm used to measure distances between states.
///
/// `Weighted { weight }` is `sqrt(weight * sum x_i^2)`; with `weight = dx` it
/// is the discrete L2 norm of a semi-discretized PDE state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateNorm {
    Euclidean,
    Weighted { weight: f64 },
}

impl StateNorm {
    pub fn weight(&self) -> f64 {
        match *self {
            StateNorm::Euclidean => 1.0,
            StateNorm::Weighted { weight } => weight,
        }
    }

    pub fn norm_sq(&self, x: &[f64]) -> f64 {
        self.weight() * x.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.norm_sq(x).sqrt()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let raw: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (self.weight() * raw).sqrt()
    }
}

/// Global Lipschitz constants of the dynamics, running cost and terminal cost
/// in the state variable. Supplied by the user, never estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstants {
    pub dynamics: f64,
    pub running_cost: f64,
    pub terminal_cost: f64,
}

/// Dynamics, costs and discount of a finite-horizon problem
///
/// `min J = int_t^T L(y, u, s) e^{-lambda (s - t)} ds + g(y(T)) e^{-lambda (T - t)}`
/// subject to `y' = f(y, u, s)`.
#[derive(Clone)]
pub struct OcProblem {
    name: String,
    dim: usize,
    control_dim: usize,
    dynamics: Arc<DynamicsFn>,
    running_cost: Arc<RunningCostFn>,
    terminal_cost: Arc<TerminalCostFn>,
    discount: f64,
    autonomous: bool,
    lipschitz: Option<LipschitzConstants>,
    norm: StateNorm,
    linear: Option<Arc<LinearAffineDynamics>>,
}

impl fmt::Debug for OcProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OcProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("control_dim", &self.control_dim)
            .field("discount", &self.discount)
            .field("autonomous", &self.autonomous)
            .field("lipschitz", &self.lipschitz)
            .field("norm", &self.norm)
            .field("linear", &self.linear.is_some())
            .finish()
    }
}

impl OcProblem {
    /// A non-autonomous, undiscounted problem with Euclidean state norm.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        control_dim: usize,
        dynamics: impl Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
        running_cost: impl Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
        terminal_cost: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 || control_dim == 0 {
            return Err(TsaError::invalid("state and control dimensions must be >= 1"));
        }
        Ok(OcProblem {
            name: name.into(),
            dim,
            control_dim,
            dynamics: Arc::new(dynamics),
            running_cost: Arc::new(running_cost),
            terminal_cost: Arc::new(terminal_cost),
            discount: 0.0,
            autonomous: false,
            lipschitz: None,
            norm: StateNorm::Euclidean,
            linear: None,
        })
    }

    /// Problem whose dynamics are `A x + B u`; enables implicit stepping.
    pub fn linear(
        name: impl Into<String>,
        dynamics: LinearAffineDynamics,
        running_cost: impl Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
        terminal_cost: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let linear = Arc::new(dynamics);
        let f = Arc::clone(&linear);
        let mut problem = Self::new(
            name,
            linear.dim(),
            linear.control_dim(),
            move |x, u, _t, out| f.apply(x, u, out),
            running_cost,
            terminal_cost,
        )?;
        problem.autonomous = true;
        problem.linear = Some(linear);
        Ok(problem)
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        if !(discount >= 0.0) || !discount.is_finite() {
            return Err(TsaError::invalid(format!("discount must be >= 0, got {discount}")));
        }
        self.discount = discount;
        Ok(self)
    }

    pub fn autonomous(mut self, autonomous: bool) -> Self {
        self.autonomous = autonomous;
        self
    }

    pub fn with_lipschitz(mut self, constants: LipschitzConstants) -> Result<Self> {
        let c = [constants.dynamics, constants.running_cost, constants.terminal_cost];
        if c.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(TsaError::invalid("Lipschitz constants must be finite and >= 0"));
        }
        self.lipschitz = Some(constants);
        Ok(self)
    }

    pub fn with_norm(mut self, norm: StateNorm) -> Result<Self> {
        if !(norm.weight() > 0.0) || !norm.weight().is_finite() {
            return Err(TsaError::invalid("norm weight must be positive"));
        }
        self.norm = norm;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn lipschitz(&self) -> Option<LipschitzConstants> {
        self.lipschitz
    }

    pub fn norm(&self) -> StateNorm {
        self.norm
    }

    pub fn linear_dynamics(&self) -> Option<&Arc<LinearAffineDynamics>> {
        self.linear.as_ref()
    }

    /// Evaluates `f(x, u, t)` into `out`.
    #[inline]
    pub fn dynamics_into(&self, x: &[f64], u: &[f64], t: f64, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        (self.dynamics)(x, u, t, out)
    }

    pub fn dynamics(&self, x: &[f64], u: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.dynamics_into(x, u, t, &mut out);
        out
    }

    #[inline]
    pub fn running_cost(&self, x: &[f64], u: &[f64], t: f64) -> f64 {
        (self.running_cost)(x, u, t)
    }

    #[inline]
    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        (self.terminal_cost)(x)
    }

    /// Per-step discount factor `e^{-lambda dt}`.
    pub fn step_discount(&self, dt: f64) -> f64 {
        (-self.discount * dt).exp()
    }

    pub(crate) fn check_state(&self, what: &'static str, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(TsaError::Dimension {
                what,
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_controls(&self, controls: &crate::ControlGrid) -> Result<()> {
        if controls.dim() != self.control_dim {
            return Err(TsaError::Dimension {
                what: "control set",
                expected: self.control_dim,
                got: controls.dim(),
            });
        }
        Ok(())
    }
}
