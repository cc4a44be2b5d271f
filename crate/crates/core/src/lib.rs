//! Marginal simulation-based calibration of Bayes factors for linear mixed
//! models: prior/data simulation for three factorial designs, gradient-based
//! posterior sampling, bridge-sampling marginal likelihoods with warning
//! semantics, and the calibration analyses (JZS t-tests, reliability diagrams).
//!
//! Numerical kernels are generic over [`Scalar`]; the aliases at the crate
//! root fix them to `f64`.

pub mod analysis;
pub mod bridge;
pub mod config;
pub mod conjugate;
pub mod distributions;
pub mod error;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod sbc;
pub mod scalar;
pub mod simulate;
pub mod target;
pub mod validation;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use target::LogDensity;

pub type ParameterSet = model::ParameterSet<f64>;
pub type RandomBlock = model::RandomBlock<f64>;
pub type CorrCholesky = linalg::Lower<f64>;
