//! Uniform grids in trait space and time, with composite trapezoid quadrature.

use crate::error::{Error, Result};

/// Uniform grid on `[x_min, x_max]` with `n_points` nodes.
///
/// Node `i` is computed as `(x_min * (n - 1 - i) + x_max * i) / (n - 1)`, which equals
/// `x_min + i * h` up to roundoff and is exactly antisymmetric when `x_min = -x_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n_points}")));
        }
        Ok(Self { x_min, x_max, n_points })
    }

    /// Builds a grid from a target spacing. The interval length must be an integer
    /// multiple of `h` (to relative precision 1e-9).
    pub fn with_spacing(x_min: f64, x_max: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        let cells = (x_max - x_min) / h;
        let rounded = cells.round();
        if rounded < 2.0 || (cells - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "interval [{x_min}, {x_max}] is not an integer multiple (>= 2) of h = {h}"
            )));
        }
        Self::new(x_min, x_max, rounded as usize + 1)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        let last = (self.n_points - 1) as f64;
        let i = i as f64;
        (self.x_min * (last - i) + self.x_max * i) / last
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let s = ((x - self.x_min) / self.h()).round();
        s.clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    /// Composite trapezoid weights: `h` in the interior, `h/2` at both ends.
    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n_points, self.h())
    }

    /// Composite trapezoid approximation of the integral of nodal `values`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n_points);
        trapezoid(values, self.h())
    }
}

/// Uniform grid `t_k = k * T / n_steps`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidTimeGrid(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        if n_steps < 1 {
            return Err(Error::InvalidTimeGrid("need at least one step".into()));
        }
        Ok(Self { t_final, n_steps })
    }

    pub fn with_step(t_final: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidTimeGrid(format!("dt must be positive, got {dt}")));
        }
        let steps = t_final / dt;
        let rounded = steps.round();
        if rounded < 1.0 || (steps - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::InvalidTimeGrid(format!(
                "final time {t_final} is not an integer multiple of dt = {dt}"
            )));
        }
        Self::new(t_final, rounded as usize)
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of time nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.t_final * k as f64 / self.n_steps as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Index `k` with `t_k == t` up to 1e-9 relative tolerance.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt()).round();
        if k < 0.0 || k > self.n_steps as f64 {
            return None;
        }
        let k = k as usize;
        let tol = 1e-9 * self.t_final.max(1.0);
        ((self.node(k) - t).abs() <= tol).then_some(k)
    }

    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.len(), self.dt())
    }

    /// Discrete `L^2(0,T)` norm using trapezoid weights.
    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights()
            .iter()
            .zip(values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Discrete `L^2(0,T)` inner product using trapezoid weights.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights()
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }
}

pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if let Some(first) = w.first_mut() {
        *first = 0.5 * h;
    }
    if let Some(last) = w.last_mut() {
        *last = 0.5 * h;
    }
    w
}

pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => h * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Running trapezoid integral, `out[0] = 0`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for pair in values.windows(2) {
        acc += 0.5 * h * (pair[0] + pair[1]);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}
