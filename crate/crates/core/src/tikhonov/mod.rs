//! Variational recovery of the growth rate `p` from noisy total-population data.

mod irgn;
mod operator;

pub use irgn::{irgn_minimize, IrgnConfig, IrgnResult};
pub use operator::{construct_source_p0, perturbation_bound, ForwardOperator, Linearization, OperatorVariant};
