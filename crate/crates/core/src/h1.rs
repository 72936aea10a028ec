//! Discrete `H^1` geometry on a spatial grid.
//!
//! The Gram matrix is `G = K + M` with trapezoid mass `M = diag(w)` and the stiffness
//! `K = (1/h) tridiag(-1, 2, -1)` whose first and last diagonal entries are `1/h`. The
//! latter is the mirror-closed (homogeneous Neumann) second difference scaled by the
//! mass weights, so `M^{-1} G` is the finite-difference operator `-u'' + u` with
//! `u'(boundary) = 0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;

#[derive(Debug, Clone)]
pub struct H1Machinery {
    grid: SpatialGrid,
    mass: Vec<f64>,
    diag: Vec<f64>,
    off: f64,
    chol_diag: Vec<f64>,
    chol_sub: Vec<f64>,
}

impl H1Machinery {
    pub fn new(grid: &SpatialGrid) -> Result<Self> {
        let n = grid.len();
        let h = grid.h();
        let mass = grid.weights();
        let mut diag: Vec<f64> = mass.iter().map(|m| m + 2.0 / h).collect();
        diag[0] = mass[0] + 1.0 / h;
        diag[n - 1] = mass[n - 1] + 1.0 / h;
        let off = -1.0 / h;

        let mut chol_diag = vec![0.0; n];
        let mut chol_sub = vec![0.0; n];
        for i in 0..n {
            let sub = if i == 0 { 0.0 } else { off / chol_diag[i - 1] };
            let pivot = diag[i] - sub * sub;
            if !(pivot > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            chol_sub[i] = sub;
            chol_diag[i] = pivot.sqrt();
        }

        Ok(Self {
            grid: *grid,
            mass,
            diag,
            off,
            chol_diag,
            chol_sub,
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Trapezoid mass weights (the diagonal of `M`).
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `G u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * u[i];
                if i > 0 {
                    v += self.off * u[i - 1];
                }
                if i + 1 < n {
                    v += self.off * u[i + 1];
                }
                v
            })
            .collect()
    }

    /// Solves `G w = r` with the stored Cholesky factor.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let prev = if i == 0 { 0.0 } else { self.chol_sub[i] * y[i - 1] };
            y[i] = (r[i] - prev) / self.chol_diag[i];
        }
        let mut w = vec![0.0; n];
        for i in (0..n).rev() {
            let next = if i + 1 < n {
                self.chol_sub[i + 1] * w[i + 1]
            } else {
                0.0
            };
            w[i] = (y[i] - next) / self.chol_diag[i];
        }
        w
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.apply(u).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// Dense copy of `G`.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i.abs_diff(j) == 1 {
                self.off
            } else {
                0.0
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machinery(n: usize) -> H1Machinery {
        H1Machinery::new(&SpatialGrid::new(-1.0, 1.0, n).unwrap()).unwrap()
    }

    #[test]
    fn symmetric_and_positive() {
        let h1 = machinery(31);
        let g = h1.dense();
        assert_eq!(g.clone(), g.transpose());
        let eig = g.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|l| *l > 0.0));
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let h1 = machinery(21);
        let ones = vec![1.0; 21];
        let g1 = h1.apply(&ones);
        for (a, m) in g1.iter().zip(h1.mass()) {
            assert!((a - m).abs() < 1e-12);
        }
        // ||1||_{H^1}^2 is the length of the interval
        assert!((h1.norm(&ones).powi(2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn solve_inverts_apply() {
        let h1 = machinery(57);
        let u: Vec<f64> = (0..57).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let w = h1.solve(&h1.apply(&u));
        for (a, b) in u.iter().zip(&w) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn h1_norm_of_smooth_function() {
        // u = sin(x) on [-1, 1]: int u'^2 + u^2 = int cos^2 + sin^2 = 2
        let grid = SpatialGrid::new(-1.0, 1.0, 2001).unwrap();
        let h1 = H1Machinery::new(&grid).unwrap();
        let u: Vec<f64> = grid.nodes().iter().map(|x| x.sin()).collect();
        assert!((h1.norm(&u).powi(2) - 2.0).abs() < 1e-5);
    }
}
