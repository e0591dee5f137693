//! Canonical decomposition of a scatter matrix over a coordinate partition.
//!
//! From a scatter V and a partition into K sets, form the block-diagonal
//! part Φ, the off-block-diagonal part Ψ = V − Φ, and
//! T = Φ^{−1/2} Ψ Φ^{−1/2}. Eigenvalues ρ₁ ≥ … ≥ ρ_q of T are the canonical
//! coefficients; eigenvectors β^{(j)} map to coefficient directions
//! α^{(j)} = Φ^{−1/2} β^{(j)}, normalized so that α^{(j)ᵀ} Φ α^{(j)} = 1.

use nalgebra::{DMatrix, DVector};

use crate::blocks::BlockStructure;
use crate::error::{Error, Result};
use crate::linalg::{spd_power_checked, sym_eigen_sorted, symmetrize};
use crate::loss::LossSpec;
use crate::sestimator::{s_estimate, Dataset, SConfig, SEstimate};

/// Spectral solution of the canonical problem for one scatter matrix.
#[derive(Debug, Clone)]
pub struct MslcaSolution {
    /// Block-diagonal part of the scatter.
    pub phi: DMatrix<f64>,
    /// T = Φ^{−1/2}(V − Φ)Φ^{−1/2}; symmetric, zero trace.
    pub t_matrix: DMatrix<f64>,
    /// Eigenvalues of T in descending order; each lies in [−1, K−1].
    pub rho: DVector<f64>,
    /// Orthonormal eigenvectors of T, column j paired with rho[j].
    pub beta: DMatrix<f64>,
    /// Coefficient directions, column j = Φ^{−1/2}·beta column j, so that
    /// αᵀΦα = 1.
    pub alpha: DMatrix<f64>,
}

impl MslcaSolution {
    /// Eigenvector for the j-th largest coefficient (0-based).
    pub fn beta_vector(&self, j: usize) -> DVector<f64> {
        self.beta.column(j).into_owned()
    }

    /// Coefficient direction for the j-th largest coefficient (0-based).
    pub fn alpha_vector(&self, j: usize) -> DVector<f64> {
        self.alpha.column(j).into_owned()
    }
}

fn check_square(v: &DMatrix<f64>, blocks: &BlockStructure) -> Result<()> {
    let q = blocks.q();
    if v.nrows() != q || v.ncols() != q {
        return Err(Error::Input(format!(
            "matrix is {}x{} but the block structure spans {}",
            v.nrows(),
            v.ncols(),
            q
        )));
    }
    Ok(())
}

/// Block-diagonal part of `v`: diagonal blocks copied, everything else zero.
pub fn build_phi(v: &DMatrix<f64>, blocks: &BlockStructure) -> Result<DMatrix<f64>> {
    check_square(v, blocks)?;
    blocks.diagonal_part(v)
}

/// Inverse square root of the block-diagonal part, computed block by block.
/// A diagonal block with an eigenvalue at or below 1e-12 is an error — no
/// clamping, since a silently regularized Φ would corrupt everything built
/// on top of it.
pub(crate) fn phi_inv_sqrt(phi: &DMatrix<f64>, blocks: &BlockStructure) -> Result<DMatrix<f64>> {
    const MIN_EIG: f64 = 1e-12;
    let q = blocks.q();
    let mut w = DMatrix::zeros(q, q);
    for k in 0..blocks.k() {
        let block = blocks.extract_block(phi, k, k)?;
        let inv_sqrt = spd_power_checked(&block, -0.5, MIN_EIG)
            .map_err(|eigenvalue| Error::SingularBlock { block: k, eigenvalue })?;
        let o = blocks.offset(k);
        let p = blocks.dims()[k];
        w.view_mut((o, o), (p, p)).copy_from(&inv_sqrt);
    }
    Ok(w)
}

/// T = Φ^{−1/2} Ψ Φ^{−1/2} with Ψ = V − Φ. Symmetric with zero trace: Ψ has
/// zero diagonal blocks and the congruence by a block-diagonal matrix keeps
/// them zero.
pub fn build_t(v: &DMatrix<f64>, blocks: &BlockStructure) -> Result<DMatrix<f64>> {
    check_square(v, blocks)?;
    let phi = blocks.diagonal_part(v)?;
    let w = phi_inv_sqrt(&phi, blocks)?;
    let psi = blocks.off_diagonal_part(v)?;
    let mut t = &w * psi * &w;
    symmetrize(&mut t);
    Ok(t)
}

/// Full canonical solution for a scatter matrix: spectral decomposition of T
/// plus the Φ-standardized directions. Requires at least two sets.
///
/// Deterministic: eigenvalues sorted descending, ties broken by ordering the
/// (sign-normalized) eigenvectors lexicographically, and each eigenvector's
/// first nonzero coordinate is made positive.
pub fn solve_mslca(v: &DMatrix<f64>, blocks: &BlockStructure) -> Result<MslcaSolution> {
    if blocks.k() < 2 {
        return Err(Error::Input("canonical analysis needs at least two sets".into()));
    }
    check_square(v, blocks)?;
    let phi = blocks.diagonal_part(v)?;
    let w = phi_inv_sqrt(&phi, blocks)?;
    let psi = blocks.off_diagonal_part(v)?;
    let mut t = &w * psi * &w;
    symmetrize(&mut t);
    let (rho, beta) = sym_eigen_sorted(&t);
    let alpha = &w * &beta;
    Ok(MslcaSolution { phi, t_matrix: t, rho, beta, alpha })
}

/// Robust pipeline: fit location/scatter, then solve the canonical problem
/// on the fitted scatter.
pub fn fit_robust_mslca(
    data: &Dataset,
    spec: &LossSpec,
    config: &SConfig,
) -> Result<(SEstimate, MslcaSolution)> {
    let est = s_estimate(data, spec, config)?;
    let sol = solve_mslca(&est.v, data.blocks())?;
    Ok((est, sol))
}
