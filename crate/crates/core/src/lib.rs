//! Forward simulation and parameter identification for the nonlocal selection model
//!
//! ```text
//! d/dt n(t, x) = (p(x) - d(x) rho(t)) n(t, x),   rho(t) = int n(t, x) dx,
//! ```
//!
//! on a bounded trait interval. Growth `p`, death `d` and the initial datum `n0` are nodal
//! fields on a uniform grid. The crate provides the forward solver, synthetic measurements,
//! Tikhonov/IRGN recovery of `p` from the total population and pointwise recovery of
//! derivatives from critical points of the density.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod critical;
pub mod error;
pub mod field;
pub mod forward;
pub mod grid;
pub mod h1;
pub mod io;
pub mod observations;
pub mod profile;
pub mod rate;
pub mod tikhonov;

pub use error::{Error, Result};
pub use field::{ModelInstance, ParameterField};
pub use forward::{solve_forward, solve_mass, ForwardSettings, ForwardSolution};
pub use grid::{SpatialGrid, TimeGrid};
pub use profile::{Analytic, Profile};
