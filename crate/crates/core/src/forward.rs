//! Forward problem: time marching of the cumulative mass `R(t)` with an implicit
//! trapezoid step whose inner nonlinear equation is solved by (relaxed) Picard iteration.
//!
//! The density is never integrated as a PDE. At each time node it is reconstructed from
//! `n(t, x) = n0(x) exp(t p(x) - d(x) R(t))`, so all the work is in the scalar sequence
//! `R_k`, which satisfies
//!
//! ```text
//! R_{k+1} = R_k + dt/2 (rho_k + Lambda(t_{k+1}, R_{k+1})),
//! Lambda(t, R) = int n0(x) exp(t p(x) - d(x) R) dx.
//! ```

use crate::error::{Error, Result};
use crate::field::{ModelInstance, ParameterField};
use crate::grid::{SpatialGrid, TimeGrid};

/// Largest admissible magnitude of the exponent `t p(x) - d(x) R`.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardSettings {
    /// Absolute tolerance on successive Picard iterates of `R_{k+1}`.
    pub fp_tol: f64,
    /// Maximum Picard iterations per time step.
    pub max_inner: usize,
    /// Relaxation factor in `(0, 1]`; 1 is plain Picard.
    pub relaxation: f64,
}

impl Default for ForwardSettings {
    fn default() -> Self {
        Self {
            fp_tol: 1e-13,
            max_inner: 200,
            relaxation: 1.0,
        }
    }
}

impl ForwardSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.fp_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fp_tol must be positive, got {}",
                self.fp_tol
            )));
        }
        if self.max_inner == 0 {
            return Err(Error::InvalidArgument("max_inner must be at least 1".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "relaxation must lie in (0, 1], got {}",
                self.relaxation
            )));
        }
        Ok(())
    }
}

/// Density history together with total and cumulative mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    grid: SpatialGrid,
    time: TimeGrid,
    /// Row-major `(time node, space node)`; empty when densities were not retained.
    density: Vec<f64>,
    rho: Vec<f64>,
    cumulative: Vec<f64>,
    inner_iterations: Vec<usize>,
}

impl ForwardSolution {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    pub fn has_density(&self) -> bool {
        !self.density.is_empty()
    }

    /// Density `n(t_k, .)` at time node `k`.
    ///
    /// Panics if the solution was computed without retaining densities.
    pub fn density(&self, k: usize) -> &[f64] {
        assert!(self.has_density(), "densities were not retained");
        let nx = self.grid.len();
        &self.density[k * nx..(k + 1) * nx]
    }

    /// Total mass `rho(t_k)`.
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Cumulative mass `R(t_k) = int_0^{t_k} rho`.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Picard iterations used per step (entry 0 is the trivial initial node).
    pub fn inner_iterations(&self) -> &[usize] {
        &self.inner_iterations
    }
}

/// `x -> n0(x) exp(t p(x) - d(x) r)`.
pub fn density_at(model: &ModelInstance, t: f64, r: f64) -> Result<ParameterField> {
    if !(t >= 0.0) || !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "density_at needs t >= 0 and R >= 0, got t = {t}, R = {r}"
        )));
    }
    let mut out = vec![0.0; model.grid().len()];
    fill_density(model, t, r, &mut out)?;
    ParameterField::new(*model.grid(), out)
}

fn fill_density(model: &ModelInstance, t: f64, r: f64, out: &mut [f64]) -> Result<()> {
    let grid = model.grid();
    let (p, d, n0) = (model.p.values(), model.d.values(), model.n0.values());
    for i in 0..out.len() {
        out[i] = if n0[i] == 0.0 {
            0.0
        } else {
            n0[i] * checked_exp(t * p[i] - d[i] * r, t, grid.node(i))?
        };
    }
    Ok(())
}

#[inline]
pub(crate) fn checked_exp(exponent: f64, t: f64, x: f64) -> Result<f64> {
    if exponent.abs() > MAX_EXPONENT || exponent.is_nan() {
        return Err(Error::ExponentOverflow { t, x, exponent });
    }
    Ok(exponent.exp())
}

/// `Lambda(t, R) = int n0 exp(t p - d R) dx` by the trapezoid rule.
pub(crate) fn total_mass(model: &ModelInstance, weights: &[f64], t: f64, r: f64) -> Result<f64> {
    let grid = model.grid();
    let (p, d, n0) = (model.p.values(), model.d.values(), model.n0.values());
    let mut acc = 0.0;
    for i in 0..weights.len() {
        if n0[i] != 0.0 {
            acc += weights[i] * n0[i] * checked_exp(t * p[i] - d[i] * r, t, grid.node(i))?;
        }
    }
    Ok(acc)
}

/// Weighted-norm constant `2 ||n0||_1 ||d||_inf exp(T ||p||_inf)` of the existence argument.
pub fn contraction_constant(model: &ModelInstance, t_final: f64) -> f64 {
    let l1 = model.n0.l1_norm();
    let d_sup = model.d.sup_norm();
    if l1 == 0.0 || d_sup == 0.0 {
        return 0.0;
    }
    2.0 * l1 * d_sup * (t_final * model.p.sup_norm()).exp()
}

pub fn solve_forward(model: &ModelInstance, time: &TimeGrid, settings: &ForwardSettings) -> Result<ForwardSolution> {
    march(model, time, settings, true)
}

/// Like [`solve_forward`] but keeps only `rho` and `R`.
pub fn solve_mass(model: &ModelInstance, time: &TimeGrid, settings: &ForwardSettings) -> Result<ForwardSolution> {
    march(model, time, settings, false)
}

fn march(
    model: &ModelInstance,
    time: &TimeGrid,
    settings: &ForwardSettings,
    keep_density: bool,
) -> Result<ForwardSolution> {
    settings.validate()?;
    let grid = *model.grid();
    let nx = grid.len();
    let nt = time.len();
    let dt = time.dt();
    let weights = grid.weights();
    let omega = settings.relaxation;

    let mut density = if keep_density {
        Vec::with_capacity(nt * nx)
    } else {
        Vec::new()
    };
    let mut rho = Vec::with_capacity(nt);
    let mut cumulative = Vec::with_capacity(nt);
    let mut inner_iterations = Vec::with_capacity(nt);

    let mut row = vec![0.0; nx];
    fill_density(model, 0.0, 0.0, &mut row)?;
    rho.push(grid.integrate(&row));
    cumulative.push(0.0);
    inner_iterations.push(0);
    if keep_density {
        density.extend_from_slice(&row);
    }

    for k in 0..time.n_steps() {
        let t_next = time.node(k + 1);
        let (r_k, rho_k) = (cumulative[k], rho[k]);
        let base = r_k + 0.5 * dt * rho_k;

        let mut r = r_k + dt * rho_k;
        let mut iterations = 0;
        loop {
            if iterations == settings.max_inner {
                let update = (base + 0.5 * dt * total_mass(model, &weights, t_next, r)? - r).abs();
                return Err(Error::FixedPointNotConverged {
                    step: k + 1,
                    iterations,
                    update,
                    contraction: contraction_constant(model, time.t_final()),
                });
            }
            iterations += 1;
            let image = base + 0.5 * dt * total_mass(model, &weights, t_next, r)?;
            let next = (1.0 - omega) * r + omega * image;
            let update = (next - r).abs();
            r = next;
            let tol = settings.fp_tol.max(8.0 * f64::EPSILON * r.abs());
            if update <= tol {
                break;
            }
        }
        // R is a cumulative mass of a nonnegative density; roundoff must not push it below zero.
        let r = r.max(0.0);

        fill_density(model, t_next, r, &mut row)?;
        rho.push(grid.integrate(&row));
        cumulative.push(r);
        inner_iterations.push(iterations);
        if keep_density {
            density.extend_from_slice(&row);
        }
    }

    Ok(ForwardSolution {
        grid,
        time: *time,
        density,
        rho,
        cumulative,
        inner_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Profile;
    use std::f64::consts::{E, PI};

    fn grid(n: usize) -> SpatialGrid {
        SpatialGrid::new(-1.0, 1.0, n).unwrap()
    }

    fn model(g: &SpatialGrid, p: Profile, d: Profile, n0: Profile) -> ModelInstance {
        ModelInstance::from_profiles(g, &p, &d, &n0).unwrap()
    }

    #[test]
    fn density_at_time_zero_is_initial_datum() {
        let g = grid(41);
        let m = model(&g, Profile::Exp, Profile::Const(1.0), Profile::cos_half());
        let n = density_at(&m, 0.0, 0.0).unwrap();
        assert_eq!(n.values(), m.n0.values());
    }

    #[test]
    fn density_at_zero_datum_is_zero() {
        let g = grid(41);
        let m = model(&g, Profile::Exp, Profile::Const(1.0), Profile::Const(0.0));
        let n = density_at(&m, 3.0, 2.0).unwrap();
        assert!(n.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn density_at_matches_scalar_evaluation() {
        let g = grid(41);
        let m = model(&g, Profile::Const(1.0), Profile::Const(0.0), Profile::cos_half());
        let n = density_at(&m, 1.0, 0.0).unwrap();
        for (i, v) in n.values().iter().enumerate() {
            let x = g.node(i);
            let expected = E * (PI * x / 2.0).cos();
            assert!((v - expected).abs() < 1e-14 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn density_at_reports_overflow() {
        let g = grid(11);
        let m = model(&g, Profile::Const(800.0), Profile::Const(0.0), Profile::cos_half());
        assert!(matches!(density_at(&m, 1.0, 0.0), Err(Error::ExponentOverflow { .. })));
        assert!(density_at(&m, -1.0, 0.0).is_err());
    }

    #[test]
    fn zero_datum_stays_zero() {
        let g = grid(51);
        let tg = TimeGrid::new(1.0, 20).unwrap();
        let m = model(&g, Profile::Exp, Profile::Const(1.0), Profile::Const(0.0));
        let sol = solve_forward(&m, &tg, &ForwardSettings::default()).unwrap();
        assert!(sol.rho().iter().all(|v| *v == 0.0));
        assert!(sol.cumulative().iter().all(|v| *v == 0.0));
        for k in 0..tg.len() {
            assert!(sol.density(k).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn no_competition_gives_exponential_growth() {
        let g = grid(201);
        let tg = TimeGrid::new(1.0, 50).unwrap();
        let p0 = 0.7;
        let m = model(&g, Profile::Const(p0), Profile::Const(0.0), Profile::cos_half());
        let sol = solve_forward(&m, &tg, &ForwardSettings::default()).unwrap();
        for k in 0..tg.len() {
            let expected = sol.rho()[0] * (p0 * tg.node(k)).exp();
            assert!((sol.rho()[k] - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn steady_state_when_growth_balances_death() {
        let g = grid(401);
        let tg = TimeGrid::new(1.0, 100).unwrap();
        let n0 = Profile::cos_half().sample(&g);
        let a = n0.integrate();
        let m = ModelInstance::new(ParameterField::constant(&g, a), ParameterField::constant(&g, 1.0), n0).unwrap();
        let sol = solve_forward(&m, &tg, &ForwardSettings::default()).unwrap();
        let worst = sol.rho().iter().map(|r| (r - a).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "worst deviation {worst}");
        assert!((a - 4.0 / PI).abs() < 1e-4);
    }

    #[test]
    fn contraction_constant_cases() {
        let g = grid(101);
        let m = model(&g, Profile::Exp, Profile::Const(0.0), Profile::cos_half());
        assert_eq!(contraction_constant(&m, 5.0), 0.0);
        let m = model(&g, Profile::Exp, Profile::Const(1.0), Profile::Const(0.0));
        assert_eq!(contraction_constant(&m, 5.0), 0.0);

        // mass-2 datum: n0 = pi/2 cos(pi x / 2) integrates to 2 analytically
        let n0 = Profile::CosHalf { amplitude: PI / 2.0 };
        let g = grid(2001);
        let m = model(&g, Profile::Const(0.0), Profile::Const(1.0), n0);
        let a = contraction_constant(&m, 7.0);
        assert!((a - 4.0).abs() < 1e-5, "a = {a}");
    }

    #[test]
    fn inner_iteration_limit_is_reported() {
        let g = grid(51);
        let tg = TimeGrid::new(1.0, 2).unwrap();
        let m = model(&g, Profile::Const(1.0), Profile::Const(30.0), Profile::cos_half());
        let settings = ForwardSettings {
            max_inner: 3,
            ..Default::default()
        };
        assert!(matches!(
            solve_forward(&m, &tg, &settings),
            Err(Error::FixedPointNotConverged { .. })
        ));
    }

    #[test]
    fn settings_validation() {
        let bad = ForwardSettings {
            relaxation: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ForwardSettings {
            fp_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn relaxation_reaches_the_same_solution() {
        let g = grid(101);
        let tg = TimeGrid::new(1.0, 20).unwrap();
        let m = model(&g, Profile::Exp, Profile::Const(1.0), Profile::cos_half());
        let plain = solve_forward(&m, &tg, &ForwardSettings::default()).unwrap();
        let relaxed = solve_forward(
            &m,
            &tg,
            &ForwardSettings {
                relaxation: 0.6,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in plain.rho().iter().zip(relaxed.rho()) {
            assert!((a - b).abs() < 1e-11);
        }
    }
}
