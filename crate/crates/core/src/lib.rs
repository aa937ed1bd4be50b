//! Randomized estimators of (dependent) gradients of black-box smooth functions.
//!
//! Directions are drawn from l_p-spherical laws (cone measure on the unit
//! p-sphere, or uniform on the p-ball) scaled by a random radius, and the
//! function is evaluated at an L-point stencil around the base point. For
//! inputs with a known tensor metric `G` the estimate is mapped through the
//! generalized inverse `G⁻¹`.
//!
//! The crate is organized bottom-up:
//!
//! - [`special`]: log-gamma and the Γ-ratio helpers used by every moment formula.
//! - [`sampler`]: direction/radius laws, closed-form moments, batch drawing and
//!   Gram-Schmidt decorrelation.
//! - [`scheme`]: the L-point stencil and its Vandermonde constraint solve.
//! - [`metric`]: tensor metric, pseudo-inverse and the norms used in bias bounds.
//! - [`estimator`]: the gradient estimator itself plus parameter rules and bias
//!   bound calculators.
//! - [`bench`]: test functions, the finite-difference baseline, the relative
//!   error metric and experiment runners.

pub mod bench;
pub mod error;
pub mod estimator;
pub mod metric;
pub mod rng;
pub mod sampler;
pub mod scheme;
pub mod special;

pub use error::{Error, Result};
pub use estimator::{
    estimate_gradient, recommend_p, recommended_sigma, surrogate_bias_bound, BandwidthRule,
    EstimatorConfig, GradientEstimate, Objective, SigmaRule,
};
pub use metric::{exp_corr_metric, identity_metric, Norm, TensorMetric};
pub use sampler::{
    decorrelate, decorrelate_with, draw_batch, Decorrelation, DirectionLaw, Normalization,
    RadialKind, RadialLaw, SampleBatch,
};
pub use scheme::{build_scheme, ConstraintMode, PointScheme};
