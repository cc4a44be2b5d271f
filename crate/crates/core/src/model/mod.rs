//! Factorial designs, hypotheses over them, and the mixed-model densities.

mod density;
mod design;
mod params;
mod spec;
mod transform;

pub use density::{check_shapes, linear_predictor, log_likelihood, log_prior};
pub use design::{build_design, DesignId, DesignSpec, DesignTable, Effect, Likelihood};
pub use params::{Dataset, ParameterSet, RandomBlock};
pub use spec::{Hypothesis, ModelSpec, Priors};
pub use transform::{
    chol_to_cpc, cpc_to_chol, from_unconstrained, grad_log_joint, to_unconstrained, BlockLayout, Layout, Posterior,
};
