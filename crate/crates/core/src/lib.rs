//! Robust canonical analysis of several sets of variables.
//!
//! The crate fits a robust scatter matrix to multi-set data by minimizing the
//! determinant of the scatter subject to a bounded-loss constraint, derives
//! linear combinations of the sets that are maximally correlated, and provides
//! influence diagnostics plus an asymptotic test of no correlation between
//! the sets.
//!
//! Modules:
//! - [`loss`]: bounded loss function, tuning, and asymptotic constants.
//! - [`blocks`]: partition of coordinates into variable sets.
//! - [`sestimator`]: robust location/scatter fit.
//! - [`mslca`]: canonical decomposition of the fitted scatter.
//! - [`influence`]: influence functions and gross-error sensitivity bounds.
//! - [`inference`]: test of no correlation between sets.
//! - [`datagen`]: synthetic data generation for simulations.

pub mod blocks;
pub mod datagen;
pub mod error;
pub mod inference;
pub mod influence;
pub mod loss;
pub mod mslca;
pub mod sestimator;

mod linalg;
mod numeric;

pub use blocks::BlockStructure;
pub use datagen::{null_model, sample, Contamination, Family, ModelSpec};
pub use error::{Error, Result};
pub use inference::{
    kappa0_hat, kappa0_moment, kappa0_raw, noncorrelation_test, noncorrelation_test_with,
    test_statistic, KappaMode, TestResult,
};
pub use influence::{
    if_alpha, if_bound, if_rho, if_scatter, if_t, lambda_op, InfluenceContext,
};
pub use loss::{compute_constants, AsymptoticConstants, LossSpec};
pub use mslca::{build_phi, build_t, fit_robust_mslca, solve_mslca, MslcaSolution};
pub use sestimator::{
    constraint_scale, mahalanobis_distances, refinement_step, s_estimate, Dataset, SConfig,
    SEstimate,
};
