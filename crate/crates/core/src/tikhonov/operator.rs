use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::{ModelInstance, ParameterField};
use crate::forward::{checked_exp, solve_mass, ForwardSettings};
use crate::grid::{cumulative_trapezoid, TimeGrid};
use crate::h1::H1Machinery;
use crate::observations::PopulationMeasurement;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorVariant {
    /// `p -> rho` through the nonlinear fixed point.
    Full,
    /// Measured cumulative mass substituted into the exponent; no fixed point.
    Perturbed,
}

impl OperatorVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            OperatorVariant::Full => "full",
            OperatorVariant::Perturbed => "perturbed",
        }
    }
}

/// Map from the growth rate `p` to the total-population curve on a time grid, with
/// `d` and `n0` held fixed.
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    d: ParameterField,
    n0: ParameterField,
    time: TimeGrid,
    settings: ForwardSettings,
    /// Cumulative measured mass; present only for the perturbed variant.
    r_delta: Option<Vec<f64>>,
}

/// Value and Jacobian of the discrete operator at a point.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub values: Vec<f64>,
    /// `(time nodes) x (space nodes)`; column `i` is the response to a unit nodal bump.
    pub jacobian: DMatrix<f64>,
}

impl ForwardOperator {
    pub fn full(d: ParameterField, n0: ParameterField, time: TimeGrid, settings: ForwardSettings) -> Result<Self> {
        // validates d and n0 against a dummy growth rate
        ModelInstance::new(ParameterField::zeros(d.grid()), d.clone(), n0.clone())?;
        settings.validate()?;
        Ok(Self {
            d,
            n0,
            time,
            settings,
            r_delta: None,
        })
    }

    /// Perturbed operator built from measured data; `R^delta` is the cumulative trapezoid
    /// integral of the measurement.
    pub fn perturbed(d: ParameterField, n0: ParameterField, data: &PopulationMeasurement) -> Result<Self> {
        let r_delta = cumulative_trapezoid(&data.values, data.time.dt());
        Self::perturbed_from_cumulative(d, n0, data.time, r_delta)
    }

    pub fn perturbed_from_cumulative(
        d: ParameterField,
        n0: ParameterField,
        time: TimeGrid,
        r_delta: Vec<f64>,
    ) -> Result<Self> {
        ModelInstance::new(ParameterField::zeros(d.grid()), d.clone(), n0.clone())?;
        if r_delta.len() != time.len() {
            return Err(Error::LengthMismatch {
                expected: time.len(),
                got: r_delta.len(),
            });
        }
        if r_delta[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "cumulative data must start at 0, got {}",
                r_delta[0]
            )));
        }
        Ok(Self {
            d,
            n0,
            time,
            settings: ForwardSettings::default(),
            r_delta: Some(r_delta),
        })
    }

    pub fn variant(&self) -> OperatorVariant {
        if self.r_delta.is_some() {
            OperatorVariant::Perturbed
        } else {
            OperatorVariant::Full
        }
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    pub fn d(&self) -> &ParameterField {
        &self.d
    }

    pub fn n0(&self) -> &ParameterField {
        &self.n0
    }

    pub fn settings(&self) -> &ForwardSettings {
        &self.settings
    }

    fn model(&self, p: &ParameterField) -> Result<ModelInstance> {
        p.check_same_grid(&self.n0)?;
        Ok(ModelInstance {
            p: p.clone(),
            d: self.d.clone(),
            n0: self.n0.clone(),
        })
    }

    /// Cumulative mass entering the exponent: measured for the perturbed variant,
    /// solved for the full one.
    fn cumulative(&self, p: &ParameterField) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        match &self.r_delta {
            Some(r) => Ok((r.clone(), None)),
            None => {
                let sol = solve_mass(&self.model(p)?, &self.time, &self.settings)?;
                Ok((sol.cumulative().to_vec(), Some(sol.rho().to_vec())))
            }
        }
    }

    /// Weighted integrand `w_i n0_i exp(t_k p_i - d_i R_k)` at time node `k`.
    fn weighted_density(&self, p: &ParameterField, k: usize, r: f64, out: &mut [f64]) -> Result<()> {
        let grid = self.n0.grid();
        let w = grid.weights();
        let t = self.time.node(k);
        let (pv, dv, nv) = (p.values(), self.d.values(), self.n0.values());
        for i in 0..out.len() {
            out[i] = if nv[i] == 0.0 {
                0.0
            } else {
                w[i] * nv[i] * checked_exp(t * pv[i] - dv[i] * r, t, grid.node(i))?
            };
        }
        Ok(())
    }

    pub fn apply(&self, p: &ParameterField) -> Result<Vec<f64>> {
        let (r, rho) = self.cumulative(p)?;
        if let Some(rho) = rho {
            return Ok(rho);
        }
        let mut c = vec![0.0; p.len()];
        (0..self.time.len())
            .map(|k| {
                self.weighted_density(p, k, r[k], &mut c)?;
                Ok(c.iter().sum())
            })
            .collect()
    }

    /// Directional derivative `F'(p) h`.
    ///
    /// For the full variant the derivative `D` of `rho` satisfies `D = b - a E`, `E' = D`,
    /// with `a(t) = int d n0 e^{tp - dR}` and `b(t) = int t h n0 e^{tp - dR}`; `E` is
    /// advanced with the same trapezoid rule as the forward march, which makes the
    /// result the exact derivative of the discrete forward map.
    pub fn derivative(&self, p: &ParameterField, h: &ParameterField) -> Result<Vec<f64>> {
        h.check_same_grid(p)?;
        let (r, _) = self.cumulative(p)?;
        let nt = self.time.len();
        let hv = h.values();
        let dv = self.d.values();
        let mut c = vec![0.0; p.len()];
        let mut a = Vec::with_capacity(nt);
        let mut b = Vec::with_capacity(nt);
        for (k, &rk) in r.iter().enumerate().take(nt) {
            self.weighted_density(p, k, rk, &mut c)?;
            let t = self.time.node(k);
            b.push(t * c.iter().zip(hv).map(|(ci, hi)| ci * hi).sum::<f64>());
            a.push(c.iter().zip(dv).map(|(ci, di)| ci * di).sum::<f64>());
        }
        if self.r_delta.is_some() {
            return Ok(b);
        }

        let dt = self.time.dt();
        let mut e = 0.0;
        let mut out = Vec::with_capacity(nt);
        out.push(b[0] - a[0] * e);
        for k in 0..nt - 1 {
            e = ((1.0 - 0.5 * dt * a[k]) * e + 0.5 * dt * (b[k] + b[k + 1])) / (1.0 + 0.5 * dt * a[k + 1]);
            out.push(b[k + 1] - a[k + 1] * e);
        }
        Ok(out)
    }

    /// Value and full Jacobian matrix at `p`.
    pub fn linearize(&self, p: &ParameterField) -> Result<Linearization> {
        let (r, rho) = self.cumulative(p)?;
        let nt = self.time.len();
        let nx = p.len();
        let dv = self.d.values();
        let mut c = vec![0.0; nx];
        let mut values = Vec::with_capacity(nt);
        let mut a = Vec::with_capacity(nt);
        // rows t_k c_k: the perturbed Jacobian, and the forcing of the full one
        let mut rows = DMatrix::zeros(nt, nx);
        for k in 0..nt {
            self.weighted_density(p, k, r[k], &mut c)?;
            let t = self.time.node(k);
            values.push(c.iter().sum());
            a.push(c.iter().zip(dv).map(|(ci, di)| ci * di).sum::<f64>());
            for i in 0..nx {
                rows[(k, i)] = t * c[i];
            }
        }
        let Some(rho) = rho else {
            return Ok(Linearization { values, jacobian: rows });
        };

        // sensitivity of E_k to each nodal value of p, advanced row by row
        let dt = self.time.dt();
        let mut jacobian = rows.clone();
        let mut e = vec![0.0; nx];
        for k in 0..nt - 1 {
            let lhs = 1.0 + 0.5 * dt * a[k + 1];
            let keep = 1.0 - 0.5 * dt * a[k];
            for i in 0..nx {
                e[i] = (keep * e[i] + 0.5 * dt * (rows[(k, i)] + rows[(k + 1, i)])) / lhs;
                jacobian[(k + 1, i)] -= a[k + 1] * e[i];
            }
        }
        Ok(Linearization { values: rho, jacobian })
    }

    /// `H^1`-adjoint of the derivative: `G^{-1} J^T M_t psi`.
    pub fn adjoint(&self, p: &ParameterField, psi: &[f64], h1: &H1Machinery) -> Result<ParameterField> {
        if psi.len() != self.time.len() {
            return Err(Error::LengthMismatch {
                expected: self.time.len(),
                got: psi.len(),
            });
        }
        if h1.grid() != p.grid() {
            return Err(Error::GridMismatch);
        }
        let mt = self.time.weights();
        let weighted: Vec<f64> = mt.iter().zip(psi).map(|(m, v)| m * v).collect();
        let rhs = match self.variant() {
            OperatorVariant::Perturbed => {
                let r = self.r_delta.as_ref().expect("perturbed variant has data");
                let mut rhs = vec![0.0; p.len()];
                let mut c = vec![0.0; p.len()];
                for (k, wk) in weighted.iter().enumerate() {
                    if *wk == 0.0 {
                        continue;
                    }
                    self.weighted_density(p, k, r[k], &mut c)?;
                    let scale = self.time.node(k) * wk;
                    for (acc, ci) in rhs.iter_mut().zip(&c) {
                        *acc += scale * ci;
                    }
                }
                rhs
            }
            OperatorVariant::Full => {
                let lin = self.linearize(p)?;
                let psi = nalgebra::DVector::from_vec(weighted);
                lin.jacobian.tr_mul(&psi).as_slice().to_vec()
            }
        };
        ParameterField::new(*p.grid(), h1.solve(&rhs))
    }
}

/// Prior satisfying the source condition `p_true - p0 = F'(p_true)^* w`.
pub fn construct_source_p0(
    p_true: &ParameterField,
    w: &[f64],
    op: &ForwardOperator,
    h1: &H1Machinery,
) -> Result<ParameterField> {
    let correction = op.adjoint(p_true, w, h1)?;
    p_true.axpy(-1.0, &correction)
}

/// Upper bound `||n0||_1 e^{T ||p||_inf} ||d||_inf T * data_gap` for the distance between the
/// perturbed and the full operator.
pub fn perturbation_bound(
    p: &ParameterField,
    n0: &ParameterField,
    d: &ParameterField,
    t_final: f64,
    data_gap: f64,
) -> f64 {
    n0.l1_norm() * (t_final * p.sup_norm()).exp() * d.sup_norm() * t_final * data_gap
}
