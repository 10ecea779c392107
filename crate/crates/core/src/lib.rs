//! Integrative multi-view reduced-rank regression.
//!
//! Predictors arrive in `K` views `X = (X_1, ..., X_K)`; the coefficient
//! matrix is partitioned accordingly and each block is shrunk towards low
//! rank (or exactly zero) by a weighted sum of per-view nuclear norms. The
//! convex problem is solved by ADMM with singular value soft-thresholding.
//! Binary and partially observed responses are handled by majorisation.

pub mod benchmark;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod solver;
pub mod tuning;

pub use error::{MvrrError, Result};
pub use glm::{fit, fit_binary, fit_gaussian_missing};
pub use linalg::{Mask, Matrix, Vector};
pub use model::{
    build_design, compute_weights, lambda_max, naive_df, objective, BlockCoefficients, Family,
    MultiViewDesign, PenaltyWeights, Preprocess, ResponseData,
};
pub use solver::{fit_gaussian, FitResult, SolverOptions, SolverState};

#[cfg(test)]
pub(crate) mod testutil;
