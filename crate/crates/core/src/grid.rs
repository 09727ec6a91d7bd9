//! Time grids on a compact interval with composite trapezoid weights.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    a: f64,
    b: f64,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeGrid {
    /// Equispaced grid of `m` points on `[a, b]`.
    pub fn uniform(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return invalid(format!("grid needs finite a < b, got a={a}, b={b}"));
        }
        if m < 2 {
            return invalid(format!("grid needs at least 2 points, got {m}"));
        }
        let h = (b - a) / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|i| a + i as f64 * h).collect();
        points[m - 1] = b;
        Self::from_points(points)
    }

    /// Grid on arbitrary strictly increasing points; the interval is
    /// `[points[0], points[m-1]]`.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        let m = points.len();
        if m < 2 {
            return invalid(format!("grid needs at least 2 points, got {m}"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return invalid("grid points must be finite");
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("grid points must be strictly increasing");
        }
        let mut weights = vec![0.0; m];
        for i in 0..m - 1 {
            let half = 0.5 * (points[i + 1] - points[i]);
            weights[i] += half;
            weights[i + 1] += half;
        }
        Ok(Self { a: points[0], b: points[m - 1], points, weights })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.a && t <= self.b
    }

    /// Trapezoid approximation of `∫_a^b f(t) dt` from values on the grid.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return invalid(format!(
                "expected {} values on the grid, got {}",
                self.len(),
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite integrand value at grid index {i}"));
        }
        Ok(self.integrate_unchecked(values))
    }

    pub(crate) fn integrate_unchecked(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Index of the grid point equal to `t` (up to rounding).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.a.abs().max(self.b.abs()).max(1.0);
        let k = self.points.partition_point(|&p| p < t - tol);
        (k < self.len() && (self.points[k] - t).abs() <= tol).then_some(k)
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.len() == other.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0))
    }
}
