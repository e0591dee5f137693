//! Error taxonomy for the estimation and analysis pipeline.
//!
//! Variants are grouped by the stage that raises them; everything is
//! recoverable by the caller (no panics on user data).

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed call: dimension mismatch, index out of range, bad argument.
    #[error("input error: {0}")]
    Input(String),

    /// Cutoff tuning root-finder failed to converge.
    #[error("tuning error: root-finder did not converge for q={q}, breakdown={breakdown}")]
    Tuning { q: usize, breakdown: f64 },

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error("constants error: quadrature did not converge (requested abs tol {tol:e})")]
    Constants { tol: f64 },

    /// Scatter matrix is numerically singular (factorization failed or the
    /// condition estimate exceeds 1e14).
    #[error("singular-scatter error: {0}")]
    SingularScatter(String),

    /// Sample carries no usable geometric information (all distances zero,
    /// or no nonsingular elementary subsample was found).
    #[error("degenerate-data error: {0}")]
    DegenerateData(String),

    /// The constraint-scale root has no bracket inside [1e-12, 1e12].
    #[error("scale error: no bracket for the constraint scale in [1e-12, 1e12]")]
    Scale,

    /// Every observation fell beyond the loss cutoff: the reweighting step
    /// has nothing to average.
    #[error("empty-weight error: all weights vanished (every point beyond the cutoff)")]
    EmptyWeight,

    /// The reweighted scatter of a refinement step lost full rank.
    #[error("singular-step error: reweighted scatter is singular")]
    SingularStep,

    /// A diagonal block of the scatter has an eigenvalue below 1e-12, so its
    /// inverse square root is not trustworthy. Clamping is deliberately not
    /// applied: it would silently corrupt downstream inference.
    #[error("singular-block error: diagonal block {block} has eigenvalue {eigenvalue:e} below 1e-12")]
    SingularBlock { block: usize, eigenvalue: f64 },

    /// Eigenvalue gap too small for the eigenvector-dependent influence
    /// functions (they divide by pairwise gaps).
    #[error("degenerate-spectrum error: eigenvalue gap {gap:e} below 1e-8 at index {j}")]
    DegenerateSpectrum { j: usize, gap: f64 },

    /// The test normalizer vanished (every standardized residual beyond the
    /// cutoff), so the statistic is undefined.
    #[error("degenerate-normalizer error: all residuals beyond the cutoff")]
    DegenerateNormalizer,
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
