//! Discrete control sets.

use crate::error::{Result, TsaError};

/// A fixed, ordered set of control vectors in `R^m`.
///
/// The order is significant: it fixes the child order of every tree node and
/// the tie-break of the Bellman minimum (lowest index wins).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    dim: usize,
    points: Vec<f64>,
}

impl ControlGrid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| TsaError::invalid("control set is empty"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(TsaError::invalid("control vectors must have dimension >= 1"));
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(TsaError::Dimension {
                    what: "control vector",
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(TsaError::invalid("control values must be finite"));
            }
            flat.extend_from_slice(p);
        }
        let grid = ControlGrid { dim, points: flat };
        for i in 0..grid.len() {
            for j in 0..i {
                if grid.point(i) == grid.point(j) {
                    return Err(TsaError::invalid(format!("control {i} duplicates control {j}")));
                }
            }
        }
        Ok(grid)
    }

    /// Scalar controls, in the given order.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    /// Discretizes the box `[min, max]` with the same step along every axis.
    ///
    /// Each axis gets `floor((max_k - min_k) / step) + 1` points starting at
    /// `min_k`. Points are ordered with the first axis varying slowest.
    pub fn hypercube(min: &[f64], max: &[f64], step: f64) -> Result<Self> {
        if min.len() != max.len() {
            return Err(TsaError::Dimension {
                what: "hypercube bounds",
                expected: min.len(),
                got: max.len(),
            });
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(TsaError::invalid("control step must be positive"));
        }
        let axes = min
            .iter()
            .zip(max)
            .map(|(&lo, &hi)| {
                if !(hi >= lo) {
                    return Err(TsaError::invalid(format!("empty control interval [{lo}, {hi}]")));
                }
                // Slack so that e.g. 2.0 / 0.2 counts 10 full steps.
                let count = ((hi - lo) / step * (1.0 + 1e-12) + 1e-12).floor() as usize + 1;
                Ok((0..count).map(|k| lo + k as f64 * step).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Self::from_axes(&axes)
    }

    /// Tensor product of per-axis control values, first axis slowest.
    pub fn from_axes(axes: &[Vec<f64>]) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(TsaError::invalid("every control axis needs at least one value"));
        }
        let total: usize = axes.iter().map(Vec::len).product();
        let mut points = Vec::with_capacity(total);
        let mut digits = vec![0usize; axes.len()];
        for _ in 0..total {
            points.push(digits.iter().zip(axes).map(|(&k, a)| a[k]).collect());
            for axis in (0..axes.len()).rev() {
                digits[axis] += 1;
                if digits[axis] < axes[axis].len() {
                    break;
                }
                digits[axis] = 0;
            }
        }
        Self::new(points)
    }

    /// `count` equally spaced values covering `[lo, hi]` including both ends.
    pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        match count {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..count)
                .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Index of the control equal to `u`, if present.
    pub fn index_of(&self, u: &[f64]) -> Option<usize> {
        self.iter().position(|p| p == u)
    }

    /// Index of the zero control, if it belongs to the set.
    pub fn zero_index(&self) -> Option<usize> {
        self.iter().position(|p| p.iter().all(|&v| v == 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hypercube_count_matches_floor_formula() {
        let g = ControlGrid::hypercube(&[-1.0], &[1.0], 0.5).unwrap();
        assert_eq!(g.len(), 5);
        let g = ControlGrid::hypercube(&[-1.0, -2.0], &[1.0, 0.0], 0.2).unwrap();
        assert_eq!(g.len(), 11 * 11);
        let g = ControlGrid::hypercube(&[0.0], &[1.0], 0.3).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.point(3), &[0.8999999999999999]);
    }

    #[test]
    fn tensor_order_first_axis_slowest() {
        let g = ControlGrid::from_axes(&[vec![0.0, 1.0], vec![5.0, 6.0, 7.0]]).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.point(0), &[0.0, 5.0]);
        assert_eq!(g.point(1), &[0.0, 6.0]);
        assert_eq!(g.point(3), &[1.0, 5.0]);
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(ControlGrid::new(vec![]).is_err());
        assert!(ControlGrid::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(ControlGrid::scalar(&[1.0, 1.0]).is_err());
        assert!(ControlGrid::scalar(&[f64::NAN]).is_err());
    }

    #[test]
    fn zero_lookup() {
        let g = ControlGrid::scalar(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(g.zero_index(), Some(1));
        assert_eq!(ControlGrid::scalar(&[-1.0, 1.0]).unwrap().zero_index(), None);
    }

    #[test]
    fn linspace_hits_both_ends() {
        let v = ControlGrid::linspace(-1.0, 1.0, 10);
        assert_eq!(v.len(), 10);
        assert_eq!(v[0], -1.0);
        assert_eq!(v[9], 1.0);
    }
}
