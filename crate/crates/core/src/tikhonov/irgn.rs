use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::ParameterField;
use crate::h1::H1Machinery;
use crate::observations::PopulationMeasurement;

use super::operator::ForwardOperator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrgnConfig {
    /// Target regularization parameter; the schedule is `alpha_k = max(alpha, 2^-k)`.
    pub alpha: f64,
    /// Discrepancy factor: stop once `||F(p_k) - rho^delta|| <= tau * delta`.
    pub tau: f64,
    pub max_iter: usize,
    /// Absolute residual below which the iteration stops regardless of `delta`, so that
    /// exact data terminates at roundoff level.
    pub residual_floor: f64,
}

impl IrgnConfig {
    /// `alpha = delta`, `tau = 1.5`, at most 50 iterations.
    pub fn for_noise_level(delta: f64) -> Self {
        Self {
            alpha: delta,
            tau: 1.5,
            max_iter: 50,
            residual_floor: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.tau > 1.0) {
            return Err(Error::InvalidArgument(format!("tau must exceed 1, got {}", self.tau)));
        }
        Ok(())
    }

    pub fn alpha_at(&self, k: usize) -> f64 {
        self.alpha.max(0.5f64.powi(k.min(1100) as i32))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrgnResult {
    pub p_rec: ParameterField,
    /// Number of Gauss-Newton updates applied.
    pub iterations: usize,
    /// `||F(p_k) - rho^delta||_{L^2(0,T)}` for `k = 0..=iterations`.
    pub residual_history: Vec<f64>,
    /// `||p_k - p_true||_{H^1}` for `k = 0..=iterations`, when the truth is known.
    pub error_history: Option<Vec<f64>>,
    /// Whether the discrepancy principle (rather than `max_iter`) ended the iteration.
    pub converged: bool,
}

impl IrgnResult {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().expect("history is never empty")
    }

    pub fn final_error(&self) -> Option<f64> {
        self.error_history.as_ref().and_then(|e| e.last().copied())
    }
}

/// Iteratively regularized Gauss-Newton minimization of the Tikhonov functional
/// `1/2 ||F(p) - rho^delta||^2 + alpha/2 ||p - p0||_{H^1}^2`.
///
/// Each step solves, in the nodal basis,
/// `(J^T M_t J + alpha_k G) s = J^T M_t (rho^delta - F(p_k)) + alpha_k G (p0 - p_k)`,
/// which is the `H^1`-geometry update `(F'^* F' + alpha_k I) s = F'^*(...) + alpha_k (p0 - p_k)`
/// multiplied through by `G`.
pub fn irgn_minimize(
    op: &ForwardOperator,
    data: &PopulationMeasurement,
    p0: &ParameterField,
    cfg: &IrgnConfig,
    h1: &H1Machinery,
    truth: Option<&ParameterField>,
) -> Result<IrgnResult> {
    cfg.validate()?;
    if data.time != *op.time_grid() {
        return Err(Error::InvalidArgument(
            "measurement and operator use different time grids".into(),
        ));
    }
    p0.check_same_grid(op.n0())?;
    if h1.grid() != p0.grid() {
        return Err(Error::GridMismatch);
    }
    if let Some(t) = truth {
        t.check_same_grid(p0)?;
    }

    let time = op.time_grid();
    let mt = time.weights();
    let sqrt_mt = DVector::from_iterator(mt.len(), mt.iter().map(|m| m.sqrt()));
    let gram = h1.dense();
    let threshold = (cfg.tau * data.delta).max(cfg.residual_floor);

    let mut p = p0.clone();
    let mut residuals = Vec::new();
    let mut errors = truth.map(|_| Vec::new());
    let mut k = 0;
    loop {
        let lin = op.linearize(&p)?;
        let misfit: Vec<f64> = data.values.iter().zip(&lin.values).map(|(y, f)| y - f).collect();
        let residual = time.l2_norm(&misfit);
        residuals.push(residual);
        if let (Some(errs), Some(t)) = (errors.as_mut(), truth) {
            let diff = p.axpy(-1.0, t)?;
            errs.push(h1.norm(diff.values()));
        }
        let converged = residual <= threshold;
        if converged || k == cfg.max_iter {
            return Ok(IrgnResult {
                p_rec: p,
                iterations: k,
                residual_history: residuals,
                error_history: errors,
                converged,
            });
        }

        let alpha = cfg.alpha_at(k);
        let scaled: DMatrix<f64> = DMatrix::from_fn(lin.jacobian.nrows(), lin.jacobian.ncols(), |r, c| {
            sqrt_mt[r] * lin.jacobian[(r, c)]
        });
        let mut system = scaled.tr_mul(&scaled);
        system += &gram * alpha;

        let weighted_misfit = DVector::from_iterator(misfit.len(), misfit.iter().zip(&mt).map(|(r, m)| r * m));
        let prior_gap: Vec<f64> = p0.values().iter().zip(p.values()).map(|(a, b)| a - b).collect();
        let mut rhs = lin.jacobian.tr_mul(&weighted_misfit);
        for (r, g) in rhs.iter_mut().zip(h1.apply(&prior_gap)) {
            *r += alpha * g;
        }

        let chol = system.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let step = chol.solve(&rhs);
        let next: Vec<f64> = p.values().iter().zip(step.iter()).map(|(a, s)| a + s).collect();
        p = ParameterField::new(*p.grid(), next)?;
        k += 1;
    }
}
