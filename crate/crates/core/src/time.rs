use crate::error::{Result, TsaError};

/// Uniform time discretization of `[t0, T]` into `steps` intervals.
///
/// The step is derived from the endpoints, never stored independently, and
/// the last grid time is `T` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    /// Grid with `steps` intervals. `steps == 0` is the degenerate grid
    /// `{t0}` and requires `horizon == t0`.
    pub fn new(t0: f64, horizon: f64, steps: usize) -> Result<Self> {
        if !t0.is_finite() || !horizon.is_finite() {
            return Err(TsaError::invalid("time grid endpoints must be finite"));
        }
        if steps == 0 {
            if horizon != t0 {
                return Err(TsaError::invalid("a zero-step grid needs T == t0"));
            }
        } else if !(horizon > t0) {
            return Err(TsaError::invalid(format!("horizon {horizon} must exceed t0 {t0}")));
        }
        Ok(TimeGrid { t0, horizon, steps })
    }

    /// Grid whose step is `dt`; `(T - t0) / dt` must be an integer up to
    /// rounding.
    pub fn with_step(t0: f64, horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(TsaError::invalid(format!("time step must be positive, got {dt}")));
        }
        let ratio = (horizon - t0) / dt;
        let steps = ratio.round();
        if steps < 0.0 || (ratio - steps).abs() > 1e-9 * ratio.abs().max(1.0) {
            return Err(TsaError::invalid(format!(
                "time step {dt} does not divide [{t0}, {horizon}]"
            )));
        }
        Self::new(t0, horizon, steps as usize)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            (self.horizon - self.t0) / self.steps as f64
        }
    }

    /// `t_n = t0 + n dt`, with `t_N = T` exactly.
    pub fn time(&self, n: usize) -> f64 {
        debug_assert!(n <= self.steps);
        if n == self.steps {
            self.horizon
        } else {
            self.t0 + n as f64 * self.dt()
        }
    }

    /// Time remaining until the horizon from `t_n`.
    pub fn remaining(&self, n: usize) -> f64 {
        self.horizon - self.time(n)
    }
}
