//! Chi-square test of mutual non-correlation between the variable sets.
//!
//! Under independence of the sets, n·S̃ₙ/κ̂₀ is asymptotically χ²_d with
//! d = Σ_{k>ℓ} p_k p_ℓ, where S̃ₙ measures the off-block-diagonal mass of the
//! fitted T and κ̂₀ estimates the common asymptotic variance of one
//! standardized off-block entry of the robust scatter.

use nalgebra::DMatrix;
use statrs::function::gamma::gamma_ur;

use crate::blocks::BlockStructure;
use crate::error::{Error, Result};
use crate::loss::{compute_constants, AsymptoticConstants, LossSpec};
use crate::mslca::build_t;
use crate::sestimator::{mahalanobis_distances, s_estimate, Dataset, SConfig, SEstimate};

/// Which normalizer divides n·S̃ₙ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaMode {
    /// Variance-consistent plug-in on standardized residuals; this is the
    /// normalizer that delivers the χ²_d calibration and the default.
    Consistent,
    /// First-moment plug-in evaluated on raw (uncentered, unstandardized)
    /// observation norms. Not scale-invariant; kept as an escape hatch for
    /// comparison runs.
    RawMoment,
}

/// Outcome of the non-correlation test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    /// n·S̃ₙ/κ̂₀, compared against the χ²_df upper tail.
    pub statistic: f64,
    /// Off-block-diagonal mass of the fitted T.
    pub s_tilde: f64,
    /// The normalizer actually used (see [`KappaMode`]).
    pub kappa0_hat: f64,
    /// Degrees of freedom d = Σ_{k>ℓ} p_k p_ℓ.
    pub df: usize,
    /// Upper-tail χ²_df probability at `statistic`.
    pub p_value: f64,
    /// Sample size.
    pub n: usize,
}

/// S̃ = Σ_{k>ℓ} ‖T_{kℓ}‖²_F: the squared Frobenius mass of the blocks below
/// the block diagonal. For symmetric T with zero diagonal blocks this equals
/// ½‖T‖²_F.
pub fn test_statistic(t: &DMatrix<f64>, blocks: &BlockStructure) -> Result<f64> {
    let mut total = 0.0;
    for k in 1..blocks.k() {
        for l in 0..k {
            total += blocks.extract_block(t, k, l)?.norm_squared();
        }
    }
    Ok(total)
}

fn check_test_dims(q: usize, spec: &LossSpec, constants: &AsymptoticConstants) -> Result<()> {
    if spec.dimension() != q {
        return Err(Error::Input(format!(
            "loss tuned for dimension {} but data has q = {}",
            spec.dimension(),
            q
        )));
    }
    if constants.dimension != q {
        return Err(Error::Input(format!(
            "constants computed for dimension {} but data has q = {}",
            constants.dimension, q
        )));
    }
    Ok(())
}

/// Weighted radial moments (1/n)Σ ψ²(dᵢ)dᵢ² and (1/n)Σ ψ(dᵢ)dᵢ³.
fn radial_moments(distances: impl Iterator<Item = f64>, spec: &LossSpec) -> (f64, f64) {
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut n = 0usize;
    for d in distances {
        let p = spec.psi(d);
        m2 += p * p * d * d;
        m3 += p * d * d * d;
        n += 1;
    }
    let nf = n as f64;
    (m2 / nf, m3 / nf)
}

/// Variance-consistent normalizer κ̂₀ = q(q+2)·m̂₂/m̂₃² with
/// m̂₂ = (1/n)Σψ²(dᵢ)dᵢ² and m̂₃ = (1/n)Σψ(dᵢ)dᵢ³ on the standardized
/// residuals dᵢ = ‖Ṽ^{−1/2}(Xᵢ − μ̃)‖. Converges to the asymptotic variance
/// q(q+2)·E[ψ²(R)R²]/E[ψ(R)R³]² of a standardized off-block scatter entry at
/// the Gaussian model.
pub fn kappa0_hat(
    data: &Dataset,
    est: &SEstimate,
    spec: &LossSpec,
    constants: &AsymptoticConstants,
) -> Result<f64> {
    check_test_dims(data.q(), spec, constants)?;
    let d = mahalanobis_distances(data, &est.mu, &est.v)?;
    let (m2, m3) = radial_moments(d.iter().copied(), spec);
    if !(m3 > 0.0) {
        return Err(Error::DegenerateNormalizer);
    }
    let q = data.q() as f64;
    Ok(q * (q + 2.0) * m2 / (m3 * m3))
}

/// First-moment normalizer (−2/β₃)·(q+1)^{−1}·(1/n)Σψ(dᵢ)dᵢ³ on standardized
/// residuals. Its large-n Gaussian limit is (q+2)/(q+1) for every loss in
/// the family; kept for comparison, not used by the calibrated test.
pub fn kappa0_moment(
    data: &Dataset,
    est: &SEstimate,
    spec: &LossSpec,
    constants: &AsymptoticConstants,
) -> Result<f64> {
    check_test_dims(data.q(), spec, constants)?;
    let d = mahalanobis_distances(data, &est.mu, &est.v)?;
    let (_, m3) = radial_moments(d.iter().copied(), spec);
    if !(m3 > 0.0) {
        return Err(Error::DegenerateNormalizer);
    }
    let q = data.q() as f64;
    Ok((-2.0 / constants.beta3) * m3 / (q + 1.0))
}

/// First-moment normalizer on raw observation norms ‖Xᵢ‖ — no centering, no
/// standardization. Not scale-invariant.
pub fn kappa0_raw(data: &Dataset, spec: &LossSpec, constants: &AsymptoticConstants) -> Result<f64> {
    check_test_dims(data.q(), spec, constants)?;
    let norms = (0..data.n()).map(|i| data.matrix().row(i).norm());
    let (_, m3) = radial_moments(norms, spec);
    if !(m3 > 0.0) {
        return Err(Error::DegenerateNormalizer);
    }
    let q = data.q() as f64;
    Ok((-2.0 / constants.beta3) * m3 / (q + 1.0))
}

/// Upper-tail χ²_df probability via the regularized upper incomplete gamma.
fn chi_square_upper_tail(df: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0)
}

/// Runs the full test with the default (variance-consistent) normalizer:
/// robust fit → T → S̃ₙ → κ̂₀ → p-value.
pub fn noncorrelation_test(data: &Dataset, spec: &LossSpec, config: &SConfig) -> Result<TestResult> {
    noncorrelation_test_with(data, spec, config, KappaMode::Consistent)
}

/// Same pipeline with an explicit normalizer choice.
pub fn noncorrelation_test_with(
    data: &Dataset,
    spec: &LossSpec,
    config: &SConfig,
    mode: KappaMode,
) -> Result<TestResult> {
    if data.blocks().k() < 2 {
        return Err(Error::Input(
            "the non-correlation test needs at least two blocks".into(),
        ));
    }
    let constants = compute_constants(spec)?;
    let est = s_estimate(data, spec, config)?;
    let t = build_t(&est.v, data.blocks())?;
    let s_tilde = test_statistic(&t, data.blocks())?;
    let kappa = match mode {
        KappaMode::Consistent => kappa0_hat(data, &est, spec, &constants)?,
        KappaMode::RawMoment => kappa0_raw(data, spec, &constants)?,
    };
    let df = data.blocks().off_diagonal_pairs();
    let n = data.n();
    let statistic = n as f64 * s_tilde / kappa;
    let p_value = chi_square_upper_tail(df, statistic);
    Ok(TestResult { statistic, s_tilde, kappa0_hat: kappa, df, p_value, n })
}
