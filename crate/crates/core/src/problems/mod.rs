//! Benchmark problems: an exactly solvable 2-D test, Van der Pol, a driven
//! oscillator, and semi-discretized heat and wave equations.

mod pde;

pub use pde::{heat_semidiscretization, wave_semidiscretization, HeatProfile, PdeProblem};

use std::f64::consts::PI;

use crate::builder::PruneScope;
use crate::controls::ControlGrid;
use crate::error::{Result, TsaError};
use crate::problem::{OcProblem, StateNorm};

/// Scalar transform applied to the squared state norm in the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Phi {
    #[default]
    Identity,
    NonQuadratic,
}

impl Phi {
    pub fn apply(self, s: f64) -> f64 {
        match self {
            Phi::Identity => s,
            Phi::NonQuadratic => phi_nonquadratic(s),
        }
    }
}

/// `sin(pi |s|)` on `|s| <= 0.5`, `1` on `0.5 < |s| <= 1`, `(|s| - 1)^2 + 1`
/// beyond.
pub fn phi_nonquadratic(s: f64) -> f64 {
    let a = s.abs();
    if a <= 0.5 {
        (PI * a).sin()
    } else if a <= 1.0 {
        1.0
    } else {
        (a - 1.0) * (a - 1.0) + 1.0
    }
}

/// `L = delta1 phi(|y|^2) + gamma |u|^2`, `g = delta2 phi(|y|^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub delta1: f64,
    pub delta2: f64,
    pub gamma: f64,
    pub phi: Phi,
    pub norm: StateNorm,
}

impl CostSpec {
    pub fn quadratic(delta1: f64, delta2: f64, gamma: f64) -> Result<Self> {
        if [delta1, delta2, gamma].iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(TsaError::invalid("cost weights must be finite and >= 0"));
        }
        Ok(CostSpec {
            delta1,
            delta2,
            gamma,
            phi: Phi::Identity,
            norm: StateNorm::Euclidean,
        })
    }

    pub fn with_phi(mut self, phi: Phi) -> Self {
        self.phi = phi;
        self
    }

    pub fn with_norm(mut self, norm: StateNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn running(&self, x: &[f64], u: &[f64]) -> f64 {
        let mut c = 0.0;
        if self.delta1 != 0.0 {
            c += self.delta1 * self.phi.apply(self.norm.norm_sq(x));
        }
        if self.gamma != 0.0 {
            c += self.gamma * u.iter().map(|v| v * v).sum::<f64>();
        }
        c
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        self.delta2 * self.phi.apply(self.norm.norm_sq(x))
    }

    #[allow(clippy::type_complexity)]
    fn attach(
        self,
    ) -> (
        impl Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
        impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) {
        (
            move |x: &[f64], u: &[f64], _t: f64| self.running(x, u),
            move |x: &[f64]| self.terminal(x),
        )
    }
}

/// `f(x, u) = (u, x1^2)`, `L = 0`, `g(x) = -x2`.
pub fn make_test1() -> OcProblem {
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
    .expect("valid dimensions")
    .autonomous(true)
}

pub const VDP_OMEGA: f64 = 0.15;

/// Van der Pol oscillator `f = (x2, w (1 - x1^2) x2 - x1 + u)`.
///
/// Case 1 minimizes `|y(T)|^2`; case 2 uses `delta1 = delta2 = 1`,
/// `gamma = 0.01`; case 3 treats `w` as a second control, `u = (w, u)`,
/// with `delta1 = gamma = 0.1`, `delta2 = 1`.
pub fn make_vdp(case: u8) -> Result<OcProblem> {
    let (name, cost) = match case {
        1 => ("vdp1", CostSpec::quadratic(0.0, 1.0, 0.0)?),
        2 => ("vdp2", CostSpec::quadratic(1.0, 1.0, 0.01)?),
        3 => ("vdp3", CostSpec::quadratic(0.1, 1.0, 0.1)?),
        other => return Err(TsaError::invalid(format!("unknown Van der Pol case {other}"))),
    };
    let (l, g) = cost.attach();
    let problem = if case == 3 {
        OcProblem::new(
            name,
            2,
            2,
            |x, u, _t, o| {
                o[0] = x[1];
                o[1] = u[0] * (1.0 - x[0] * x[0]) * x[1] - x[0] + u[1];
            },
            l,
            g,
        )?
    } else {
        OcProblem::new(
            name,
            2,
            1,
            |x, u, _t, o| {
                o[0] = x[1];
                o[1] = VDP_OMEGA * (1.0 - x[0] * x[0]) * x[1] - x[0] + u[0];
            },
            l,
            g,
        )?
    };
    Ok(problem.autonomous(true))
}

pub const DRIVEN_OMEGA: f64 = PI / 2.0;

/// Damped oscillator with forcing `sin(w t)`, `w = pi/2`.
pub fn make_driven_oscillator() -> OcProblem {
    let w = DRIVEN_OMEGA;
    let (l, g) = CostSpec::quadratic(0.1, 1.0, 0.1).expect("valid weights").attach();
    OcProblem::new(
        "driven",
        2,
        1,
        move |x, u, t, o| {
            o[0] = x[1];
            o[1] = -w * x[1] - w * w * x[0] + (w * t).sin() + u[0];
        },
        l,
        g,
    )
    .expect("valid dimensions")
}

/// Limit cycle of the uncontrolled driven oscillator at time `t`: the
/// periodic solution `x1 = sin(w t - pi/2) / w^2`, `x2 = x1'`.
pub fn driven_cycle_limit(t: f64) -> [f64; 2] {
    let w = DRIVEN_OMEGA;
    [(w * t - PI / 2.0).sin() / (w * w), (w * t - PI / 2.0).cos() / w]
}

/// Time integrator of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Explicit,
    Implicit,
}

impl std::str::FromStr for Scheme {
    type Err = TsaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Scheme::Explicit),
            "implicit" => Ok(Scheme::Implicit),
            other => Err(TsaError::invalid(format!(
                "unknown scheme '{other}' (expected explicit or implicit)"
            ))),
        }
    }
}

/// Merge tolerance, possibly tied to the time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    /// `eps = dt^p`.
    DtPower(f64),
    Fixed(f64),
}

impl Tolerance {
    pub fn resolve(self, dt: f64) -> f64 {
        match self {
            Tolerance::DtPower(2.0) => dt * dt,
            Tolerance::DtPower(p) => dt.powf(p),
            Tolerance::Fixed(e) => e,
        }
    }
}

/// A registered problem with its default experiment settings.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub problem: OcProblem,
    pub x0: Vec<f64>,
    pub controls: ControlGrid,
    pub dt: f64,
    pub horizon: f64,
    pub tolerance: Tolerance,
    pub scheme: Scheme,
    pub scope: PruneScope,
}

pub const REGISTRY: [&str; 9] = [
    "test1",
    "vdp1",
    "vdp2",
    "vdp3",
    "driven",
    "heat-smooth",
    "heat-indicator",
    "wave-quadratic",
    "wave-phi",
];

/// Default interior grid points of the PDE benchmarks.
pub const DEFAULT_PDE_POINTS: usize = 100;

/// Default merge radius of the wave benchmarks. The actuator indicator
/// excites high frequencies, and at `eps = dt^2` the pruned tree still
/// roughly doubles per level.
pub const WAVE_TOLERANCE: f64 = 0.01;

/// Looks up a benchmark by name. `pde_points` sets the number of interior
/// grid points of the heat and wave problems.
pub fn benchmark(name: &str, pde_points: Option<usize>) -> Result<Benchmark> {
    let d = pde_points.unwrap_or(DEFAULT_PDE_POINTS);
    let ode = |problem: OcProblem, x0: &[f64], controls: ControlGrid, scope| Benchmark {
        problem,
        x0: x0.to_vec(),
        controls,
        dt: 0.05,
        horizon: 1.0,
        tolerance: Tolerance::DtPower(2.0),
        scheme: Scheme::Explicit,
        scope,
    };
    let pde = |p: PdeProblem, tolerance| Benchmark {
        problem: p.problem,
        x0: p.x0,
        controls: ControlGrid::scalar(&[-1.0, 0.0, 1.0]).expect("valid controls"),
        dt: 0.05,
        horizon: 1.0,
        tolerance,
        scheme: Scheme::Implicit,
        scope: PruneScope::Level,
    };
    let dt2 = Tolerance::DtPower(2.0);
    let wave_tol = Tolerance::Fixed(WAVE_TOLERANCE);
    let pm1 = || ControlGrid::scalar(&[-1.0, 1.0]).expect("valid controls");
    let three = || ControlGrid::scalar(&[-1.0, 0.0, 1.0]).expect("valid controls");
    Ok(match name {
        "test1" => ode(make_test1(), &[-0.5, 0.5], pm1(), PruneScope::Tree),
        "vdp1" => ode(make_vdp(1)?, &[-1.0, 1.0], pm1(), PruneScope::Tree),
        "vdp2" => ode(make_vdp(2)?, &[-1.0, 1.0], pm1(), PruneScope::Tree),
        "vdp3" => {
            let axis = ControlGrid::linspace(-1.0, 1.0, 10);
            let controls = ControlGrid::from_axes(&[axis.clone(), axis])?;
            ode(make_vdp(3)?, &[-0.5, 0.5], controls, PruneScope::Tree)
        }
        "driven" => ode(make_driven_oscillator(), &[-0.5, 0.5], three(), PruneScope::Revisit),
        "heat-smooth" => pde(heat_semidiscretization(d, 0.1, HeatProfile::Smooth)?, dt2),
        "heat-indicator" => pde(heat_semidiscretization(d, 0.1, HeatProfile::Indicator)?, dt2),
        "wave-quadratic" => pde(wave_semidiscretization(d, 0.5, (0.4, 0.6), Phi::Identity)?, wave_tol),
        "wave-phi" => pde(
            wave_semidiscretization(d, 0.5, (0.4, 0.6), Phi::NonQuadratic)?,
            wave_tol,
        ),
        other => {
            return Err(TsaError::invalid(format!(
                "unknown problem '{other}' (known: {})",
                REGISTRY.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test1_formulas() {
        let p = make_test1();
        assert_eq!(p.dynamics(&[1.0, 0.0], &[0.5], 0.0), vec![0.5, 1.0]);
        assert_eq!(p.terminal_cost(&[3.0, 2.0]), -2.0);
        assert!(p.is_autonomous());
    }

    #[test]
    fn vdp_cases() {
        let p1 = make_vdp(1).unwrap();
        assert_eq!(p1.terminal_cost(&[3.0, 4.0]), 25.0);
        assert_eq!(p1.running_cost(&[3.0, 4.0], &[1.0], 0.0), 0.0);
        assert_eq!(p1.dynamics(&[0.0, 0.0], &[0.0], 0.0), vec![0.0, 0.0]);
        let p2 = make_vdp(2).unwrap();
        assert!((p2.running_cost(&[1.0, 1.0], &[1.0], 0.0) - 2.01).abs() < 1e-15);
        let p3 = make_vdp(3).unwrap();
        assert_eq!(p3.control_dim(), 2);
        assert_eq!(p3.dynamics(&[0.0, 1.0], &[0.5, 0.0], 0.0), vec![1.0, 0.5]);
        assert!(make_vdp(4).is_err());
    }

    #[test]
    fn vdp3_has_hundred_controls() {
        let b = benchmark("vdp3", None).unwrap();
        assert_eq!(b.controls.len(), 100);
        assert_eq!(b.controls.dim(), 2);
    }

    #[test]
    fn driven_oscillator() {
        let p = make_driven_oscillator();
        assert!(!p.is_autonomous());
        assert_eq!(p.dynamics(&[0.0, 0.0], &[0.0], 0.0), vec![0.0, 0.0]);
        let c = driven_cycle_limit(0.0);
        assert!((c[0] + 4.0 / (PI * PI)).abs() < 1e-15);
        assert!(c[1].abs() < 1e-15);
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_nonquadratic(0.0), 0.0);
        assert!((phi_nonquadratic(0.5) - 1.0).abs() < 1e-15);
        assert_eq!(phi_nonquadratic(1.0), 1.0);
        assert_eq!(phi_nonquadratic(2.0), 2.0);
        assert_eq!(phi_nonquadratic(-2.0), 2.0);
    }

    #[test]
    fn registry_resolves_every_name() {
        for name in REGISTRY {
            let b = benchmark(name, Some(8)).unwrap();
            assert_eq!(b.x0.len(), b.problem.dim(), "{name}");
            assert_eq!(b.controls.dim(), b.problem.control_dim(), "{name}");
        }
        assert!(benchmark("nope", None).is_err());
    }

    #[test]
    fn tolerance_resolution() {
        assert_eq!(Tolerance::DtPower(2.0).resolve(0.05), 0.05 * 0.05);
        assert_eq!(Tolerance::Fixed(0.0).resolve(0.05), 0.0);
        assert!((Tolerance::DtPower(1.5).resolve(0.04) - 0.008).abs() < 1e-15);
    }
}
