//! Gaussian-process regression of correction-factor distributions over
//! geometry coefficients.

pub mod kernel;
pub mod scalar;
pub mod vector;

pub use kernel::{cross_covariance, kernel_matrix, rbf_kernel};
pub use scalar::{length_scale_bounds, OptimizerOptions, ScalarGP};
pub use vector::{
    pair_name, FactorPrediction, GpConfig, GpState, TrainingRecord, VectorGP, FACTOR_NAMES, GP_SCHEMA_VERSION,
    N_CORR, PAIRS,
};
