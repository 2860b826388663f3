//! One-step time discretizations of the controlled dynamics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{Result, TsaError};
use crate::problem::OcProblem;

/// Dense factorizations are refused above this dimension.
pub const MAX_DENSE_DIM: usize = 500;

/// A one-step map `x_{n+1} = S(x_n, u, t_n)` with a fixed step size.
pub trait Stepper: Send + Sync {
    fn dt(&self) -> f64;

    fn dim(&self) -> usize;

    /// Writes the image of `x` into `out` without checking finiteness.
    fn step_into(&self, x: &[f64], u: &[f64], t: f64, out: &mut [f64]);

    fn step(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(TsaError::Dimension {
                what: "state",
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut out = vec![0.0; x.len()];
        self.step_into(x, u, t, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(TsaError::NonFiniteValue(format!("step from t = {t} produced {out:?}")));
        }
        Ok(out)
    }
}

/// `x + dt f(x, u, t)`.
#[derive(Debug, Clone)]
pub struct ExplicitEuler {
    problem: OcProblem,
    dt: f64,
}

impl ExplicitEuler {
    pub fn new(problem: &OcProblem, dt: f64) -> Self {
        ExplicitEuler {
            problem: problem.clone(),
            dt,
        }
    }
}

impl Stepper for ExplicitEuler {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn dim(&self) -> usize {
        self.problem.dim()
    }

    #[inline]
    fn step_into(&self, x: &[f64], u: &[f64], t: f64, out: &mut [f64]) {
        self.problem.dynamics_into(x, u, t, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + self.dt * *o;
        }
    }
}

/// One explicit Euler step of the problem dynamics.
pub fn explicit_euler_step(problem: &OcProblem, x: &[f64], u: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
    problem.check_state("state", x)?;
    if u.len() != problem.control_dim() {
        return Err(TsaError::Dimension {
            what: "control",
            expected: problem.control_dim(),
            got: u.len(),
        });
    }
    ExplicitEuler::new(problem, dt).step(x, u, t)
}

/// Tridiagonal matrix stored by diagonals; `lower[i]` sits at row `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(TsaError::invalid(format!(
                "tridiagonal bands of lengths {}/{}/{} are inconsistent",
                lower.len(),
                n,
                upper.len()
            )));
        }
        Ok(Tridiagonal { lower, diag, upper })
    }

    /// `scale * tridiag(1, -2, 1)` of size `n`.
    pub fn laplacian(n: usize, scale: f64) -> Result<Self> {
        if n == 0 {
            return Err(TsaError::invalid("laplacian needs at least one point"));
        }
        Self::new(vec![scale; n - 1], vec![-2.0 * scale; n], vec![scale; n - 1])
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `out += alpha * self * x`.
    pub fn mul_add(&self, alpha: f64, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            out[i] += alpha * acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i == j + 1 {
                self.lower[j]
            } else if j == i + 1 {
                self.upper[i]
            } else {
                0.0
            }
        })
    }
}

/// State matrix of linear dynamics `y' = A y + B u`.
#[derive(Debug, Clone)]
pub enum LinearOperator {
    Dense(DMatrix<f64>),
    Tridiagonal(Tridiagonal),
    /// `[[0, I], [K, 0]]` acting on `(w, w')`, for second-order-in-time
    /// systems `w'' = K w`.
    SecondOrder(Tridiagonal),
}

impl LinearOperator {
    pub fn dim(&self) -> usize {
        match self {
            LinearOperator::Dense(a) => a.nrows(),
            LinearOperator::Tridiagonal(t) => t.dim(),
            LinearOperator::SecondOrder(k) => 2 * k.dim(),
        }
    }

    /// `out += alpha * A x`.
    pub fn mul_add(&self, alpha: f64, x: &[f64], out: &mut [f64]) {
        match self {
            LinearOperator::Dense(a) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let row: f64 = (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum();
                    *o += alpha * row;
                }
            }
            LinearOperator::Tridiagonal(t) => t.mul_add(alpha, x, out),
            LinearOperator::SecondOrder(k) => {
                let n = k.dim();
                let (w, v) = x.split_at(n);
                let (ow, ov) = out.split_at_mut(n);
                for (o, vi) in ow.iter_mut().zip(v) {
                    *o += alpha * vi;
                }
                k.mul_add(alpha, w, ov);
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            LinearOperator::Dense(a) => a.clone(),
            LinearOperator::Tridiagonal(t) => t.to_dense(),
            LinearOperator::SecondOrder(k) => {
                let n = k.dim();
                let kd = k.to_dense();
                let mut a = DMatrix::zeros(2 * n, 2 * n);
                for i in 0..n {
                    a[(i, n + i)] = 1.0;
                }
                a.view_mut((n, 0), (n, n)).copy_from(&kd);
                a
            }
        }
    }
}

/// Linear affine dynamics `f(y, u) = A y + B u` with `B` a `d x m` matrix.
#[derive(Debug, Clone)]
pub struct LinearAffineDynamics {
    operator: LinearOperator,
    /// Column-major `d x m`.
    input: Vec<f64>,
    control_dim: usize,
}

impl LinearAffineDynamics {
    pub fn new(operator: LinearOperator, input: Vec<f64>, control_dim: usize) -> Result<Self> {
        let d = operator.dim();
        if let LinearOperator::Dense(a) = &operator {
            if a.nrows() != a.ncols() {
                return Err(TsaError::invalid("state matrix must be square"));
            }
        }
        if control_dim == 0 || input.len() != d * control_dim {
            return Err(TsaError::Dimension {
                what: "input matrix",
                expected: d * control_dim.max(1),
                got: input.len(),
            });
        }
        Ok(LinearAffineDynamics {
            operator,
            input,
            control_dim,
        })
    }

    /// Single-input dynamics with input vector `b`.
    pub fn single_input(operator: LinearOperator, b: Vec<f64>) -> Result<Self> {
        Self::new(operator, b, 1)
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.operator
    }

    pub fn input_column(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.input[k * d..(k + 1) * d]
    }

    /// `out += alpha * B u`.
    pub fn input_mul_add(&self, alpha: f64, u: &[f64], out: &mut [f64]) {
        for (k, &uk) in u.iter().enumerate() {
            if uk != 0.0 {
                for (o, b) in out.iter_mut().zip(self.input_column(k)) {
                    *o += alpha * uk * b;
                }
            }
        }
    }

    /// `out = A x + B u`.
    pub fn apply(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.operator.mul_add(1.0, x, out);
        self.input_mul_add(1.0, u, out);
    }
}

/// LU factors of a tridiagonal matrix, no pivoting.
#[derive(Debug, Clone)]
struct TridiagonalLu {
    /// Multipliers `l_i` for rows `1..n`.
    mult: Vec<f64>,
    pivots: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalLu {
    fn factor(m: &Tridiagonal) -> Result<Self> {
        let n = m.dim();
        let mut pivots = vec![0.0; n];
        let mut mult = vec![0.0; n.saturating_sub(1)];
        pivots[0] = m.diag[0];
        for i in 1..n {
            if pivots[i - 1].abs() < f64::MIN_POSITIVE.sqrt() {
                return Err(TsaError::Singular(format!("zero pivot at row {}", i - 1)));
            }
            mult[i - 1] = m.lower[i - 1] / pivots[i - 1];
            pivots[i] = m.diag[i] - mult[i - 1] * m.upper[i - 1];
        }
        if pivots[n - 1].abs() < f64::MIN_POSITIVE.sqrt() {
            return Err(TsaError::Singular(format!("zero pivot at row {}", n - 1)));
        }
        Ok(TridiagonalLu {
            mult,
            pivots,
            upper: m.upper.clone(),
        })
    }

    fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.pivots.len();
        for i in 1..n {
            rhs[i] -= self.mult[i - 1] * rhs[i - 1];
        }
        rhs[n - 1] /= self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) / self.pivots[i];
        }
    }
}

#[derive(Debug, Clone)]
enum Factorization {
    Dense(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Tridiagonal(TridiagonalLu),
    /// Factors of `I - dt^2 K`, the Schur complement of `I - dt A` for the
    /// second-order block form.
    SecondOrder(TridiagonalLu, Tridiagonal),
}

/// Implicit Euler for linear affine dynamics:
/// `(I - dt A) y = x + dt B u`, with the control term taken explicitly.
///
/// `I - dt A` is factored once at construction.
#[derive(Debug, Clone)]
pub struct ImplicitEuler {
    dynamics: Arc<LinearAffineDynamics>,
    dt: f64,
    factor: Factorization,
}

impl ImplicitEuler {
    pub fn new(dynamics: Arc<LinearAffineDynamics>, dt: f64) -> Result<Self> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(TsaError::invalid(format!("time step must be >= 0, got {dt}")));
        }
        let factor = match dynamics.operator() {
            LinearOperator::Dense(a) => {
                let d = a.nrows();
                if d > MAX_DENSE_DIM {
                    return Err(TsaError::invalid(format!(
                        "dense implicit factorization refused for d = {d} > {MAX_DENSE_DIM}"
                    )));
                }
                let m = DMatrix::identity(d, d) - a * dt;
                let lu = m.lu();
                if !lu.is_invertible() {
                    return Err(TsaError::Singular("I - dt A is not invertible".into()));
                }
                Factorization::Dense(lu)
            }
            LinearOperator::Tridiagonal(a) => {
                let m = Tridiagonal {
                    lower: a.lower.iter().map(|v| -dt * v).collect(),
                    diag: a.diag.iter().map(|v| 1.0 - dt * v).collect(),
                    upper: a.upper.iter().map(|v| -dt * v).collect(),
                };
                Factorization::Tridiagonal(TridiagonalLu::factor(&m)?)
            }
            LinearOperator::SecondOrder(k) => {
                let dt2 = dt * dt;
                let m = Tridiagonal {
                    lower: k.lower.iter().map(|v| -dt2 * v).collect(),
                    diag: k.diag.iter().map(|v| 1.0 - dt2 * v).collect(),
                    upper: k.upper.iter().map(|v| -dt2 * v).collect(),
                };
                Factorization::SecondOrder(TridiagonalLu::factor(&m)?, k.clone())
            }
        };
        Ok(ImplicitEuler { dynamics, dt, factor })
    }

    /// Builds the solver from a problem carrying linear dynamics.
    pub fn for_problem(problem: &OcProblem, dt: f64) -> Result<Self> {
        let linear = problem.linear_dynamics().ok_or_else(|| {
            TsaError::invalid(format!(
                "implicit stepping needs linear affine dynamics; '{}' has none",
                problem.name()
            ))
        })?;
        Self::new(Arc::clone(linear), dt)
    }

    pub fn dynamics(&self) -> &LinearAffineDynamics {
        &self.dynamics
    }

    /// Solves `(I - dt A) y = rhs` in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        match &self.factor {
            Factorization::Dense(lu) => {
                let mut b = DVector::from_column_slice(rhs);
                // Invertibility was checked at construction.
                lu.solve_mut(&mut b);
                rhs.copy_from_slice(b.as_slice());
            }
            Factorization::Tridiagonal(lu) => lu.solve_in_place(rhs),
            Factorization::SecondOrder(lu, k) => {
                // w - dt v = r1,  v - dt K w = r2
                //   => (I - dt^2 K) w = r1 + dt r2,  v = r2 + dt K w.
                let n = k.dim();
                let (w, v) = rhs.split_at_mut(n);
                for (wi, vi) in w.iter_mut().zip(v.iter()) {
                    *wi += self.dt * vi;
                }
                lu.solve_in_place(w);
                k.mul_add(self.dt, w, v);
            }
        }
    }
}

impl Stepper for ImplicitEuler {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn dim(&self) -> usize {
        self.dynamics.dim()
    }

    fn step_into(&self, x: &[f64], u: &[f64], _t: f64, out: &mut [f64]) {
        out.copy_from_slice(x);
        self.dynamics.input_mul_add(self.dt, u, out);
        self.solve_in_place(out);
    }
}

/// One implicit Euler step with a prebuilt solver.
pub fn implicit_euler_step(solver: &ImplicitEuler, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != solver.dynamics.control_dim() {
        return Err(TsaError::Dimension {
            what: "control",
            expected: solver.dynamics.control_dim(),
            got: u.len(),
        });
    }
    solver.step(x, u, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(solver: &ImplicitEuler, x: &[f64], u: &[f64], y: &[f64]) -> f64 {
        // (I - dt A) y - x - dt B u, computed through the dense matrix.
        let a = solver.dynamics().operator().to_dense();
        let d = x.len();
        let lhs = (DMatrix::identity(d, d) - a * solver.dt()) * DVector::from_column_slice(y);
        let mut rhs = x.to_vec();
        solver.dynamics().input_mul_add(solver.dt(), u, &mut rhs);
        (lhs - DVector::from_vec(rhs)).norm()
    }

    #[test]
    fn heat_two_by_two_matches_hand_solve() {
        // A = s [[-2, 1], [1, -2]], s = sigma / dx^2 with sigma = 0.1, dx = 1/3.
        let s = 0.1 * 9.0;
        let dt = 0.05;
        let lin = LinearAffineDynamics::single_input(
            LinearOperator::Tridiagonal(Tridiagonal::laplacian(2, s).unwrap()),
            vec![0.0, 0.0],
        )
        .unwrap();
        let solver = ImplicitEuler::new(Arc::new(lin), dt).unwrap();
        let y = implicit_euler_step(&solver, &[1.0, 0.0], &[0.0]).unwrap();
        // M = [[1 + 2 dt s, -dt s], [-dt s, 1 + 2 dt s]]; y = M^{-1} e1.
        let a = 1.0 + 2.0 * dt * s;
        let b = -dt * s;
        let det = a * a - b * b;
        assert!((y[0] - a / det).abs() < 1e-14);
        assert!((y[1] + b / det).abs() < 1e-14);
    }

    #[test]
    fn zero_state_matrix_reduces_to_explicit_input_step() {
        let lin = LinearAffineDynamics::single_input(LinearOperator::Dense(DMatrix::zeros(3, 3)), vec![1.0, 2.0, 3.0])
            .unwrap();
        let solver = ImplicitEuler::new(Arc::new(lin), 0.1).unwrap();
        let y = implicit_euler_step(&solver, &[1.0, 1.0, 1.0], &[2.0]).unwrap();
        for (yi, e) in y.iter().zip([1.2, 1.4, 1.6]) {
            assert!((yi - e).abs() < 1e-14);
        }
    }

    #[test]
    fn homogeneous_zero_is_fixed() {
        let lin = LinearAffineDynamics::single_input(
            LinearOperator::SecondOrder(Tridiagonal::laplacian(4, 3.0).unwrap()),
            vec![0.0; 8],
        )
        .unwrap();
        let solver = ImplicitEuler::new(Arc::new(lin), 0.05).unwrap();
        let y = implicit_euler_step(&solver, &[0.0; 8], &[1.0]).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn second_order_block_solve_has_small_residual() {
        let n = 6;
        let k = Tridiagonal::laplacian(n, 0.5 * 49.0).unwrap();
        let b: Vec<f64> = (0..2 * n)
            .map(|i| if i >= n + 2 && i < n + 4 { 1.0 } else { 0.0 })
            .collect();
        let lin = LinearAffineDynamics::single_input(LinearOperator::SecondOrder(k), b).unwrap();
        let solver = ImplicitEuler::new(Arc::new(lin), 0.05).unwrap();
        let x: Vec<f64> = (0..2 * n).map(|i| (i as f64 * 0.7).sin()).collect();
        let y = solver.step(&x, &[0.5], 0.0).unwrap();
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(residual(&solver, &x, &[0.5], &y) <= 1e-10 * (1.0 + xn));
    }

    #[test]
    fn dense_factorization_refused_above_cap() {
        let lin = LinearAffineDynamics::single_input(
            LinearOperator::Dense(DMatrix::zeros(MAX_DENSE_DIM + 1, MAX_DENSE_DIM + 1)),
            vec![0.0; MAX_DENSE_DIM + 1],
        )
        .unwrap();
        assert!(ImplicitEuler::new(Arc::new(lin), 0.1).is_err());
    }

    #[test]
    fn singular_matrix_reported() {
        // I - dt A = 0 when A = I / dt.
        let lin = LinearAffineDynamics::single_input(
            LinearOperator::Tridiagonal(Tridiagonal::new(vec![0.0], vec![10.0, 10.0], vec![0.0]).unwrap()),
            vec![0.0, 0.0],
        )
        .unwrap();
        assert!(matches!(
            ImplicitEuler::new(Arc::new(lin), 0.1),
            Err(TsaError::Singular(_))
        ));
    }
}
