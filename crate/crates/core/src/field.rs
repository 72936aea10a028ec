use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::profile::Profile;

/// Nodal samples of a scalar function on a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterField {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl ParameterField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField {
                name: "field",
                reason: format!("non-finite value at node {i}"),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid: *grid, values }
    }

    pub fn constant(grid: &SpatialGrid, value: f64) -> Self {
        Self {
            grid: *grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: &SpatialGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid approximation of the `L^1` norm.
    pub fn l1_norm(&self) -> f64 {
        let abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        self.grid.integrate(&abs)
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|v| *v == self.values[0])
    }

    /// Pointwise `self + scale * other`.
    pub fn axpy(&self, scale: f64, other: &ParameterField) -> Result<ParameterField> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(Self {
            grid: self.grid,
            values,
        })
    }

    pub fn check_same_grid(&self, other: &ParameterField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Parameter triple `(p, d, n0)` of the selection model on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInstance {
    pub p: ParameterField,
    pub d: ParameterField,
    pub n0: ParameterField,
}

impl ModelInstance {
    /// Validates the triple: shared grid, `n0 >= 0`, `d >= 0`, and `n0` vanishing at both
    /// boundary nodes so that its support lies inside the grid.
    pub fn new(p: ParameterField, d: ParameterField, n0: ParameterField) -> Result<Self> {
        p.check_same_grid(&d)?;
        p.check_same_grid(&n0)?;
        if let Some(i) = n0.values().iter().position(|v| *v < 0.0) {
            return Err(Error::InvalidField {
                name: "n0",
                reason: format!("negative value at node {i}"),
            });
        }
        if let Some(i) = d.values().iter().position(|v| *v < 0.0) {
            return Err(Error::InvalidField {
                name: "d",
                reason: format!("negative value at node {i}"),
            });
        }
        let scale = n0.sup_norm();
        let last = n0.len() - 1;
        let edge = n0.values()[0].abs().max(n0.values()[last].abs());
        if edge > 1e-10 * scale {
            return Err(Error::InvalidField {
                name: "n0",
                reason: format!("must vanish at the grid boundary (boundary value {edge:e})"),
            });
        }
        Ok(Self { p, d, n0 })
    }

    pub fn from_profiles(grid: &SpatialGrid, p: &Profile, d: &Profile, n0: &Profile) -> Result<Self> {
        Self::new(p.sample(grid), d.sample(grid), n0.sample(grid))
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.p.grid()
    }

    /// Same model with a different growth rate.
    pub fn with_p(&self, p: ParameterField) -> Result<Self> {
        p.check_same_grid(&self.n0)?;
        Ok(Self {
            p,
            d: self.d.clone(),
            n0: self.n0.clone(),
        })
    }
}
