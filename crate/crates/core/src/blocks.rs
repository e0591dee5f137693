//! Partition of the q-dimensional ambient space into K blocks, and the two
//! block projections used everywhere downstream: the block-diagonal part D
//! and its off-block-diagonal complement G.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// The partition (p₁, …, p_K) of dimension q = Σ p_k. Offsets are prefix
/// sums, so block k occupies rows/columns [offset(k), offset(k) + p_k).
///
/// A single-block structure (K = 1) is accepted so plain scatter estimation
/// can carry a trivial partition; the canonical-analysis and test entry
/// points require K ≥ 2 and reject K = 1 themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStructure {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    q: usize,
}

impl BlockStructure {
    /// Builds a partition from the block dimensions.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Input("block structure needs at least one block".into()));
        }
        if dims.iter().any(|&p| p == 0) {
            return Err(Error::Input("block dimensions must be positive".into()));
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0usize;
        for &p in &dims {
            offsets.push(acc);
            acc += p;
        }
        Ok(Self { dims, offsets, q: acc })
    }

    /// Number of blocks K.
    pub fn k(&self) -> usize {
        self.dims.len()
    }

    /// Ambient dimension q = Σ p_k.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Block dimensions (p₁, …, p_K).
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Start offset of block k (0-based).
    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// The (k, l) sub-block of a q×q matrix (0-based block indices).
    pub fn extract_block(&self, m: &DMatrix<f64>, k: usize, l: usize) -> Result<DMatrix<f64>> {
        self.check_dim(m)?;
        if k >= self.k() || l >= self.k() {
            return Err(Error::Input(format!(
                "block index ({k}, {l}) out of range for K={}",
                self.k()
            )));
        }
        Ok(m.view((self.offsets[k], self.offsets[l]), (self.dims[k], self.dims[l])).into_owned())
    }

    /// The block-diagonal part D(M): diagonal blocks kept, everything else
    /// zeroed.
    pub fn diagonal_part(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(m)?;
        let mut out = DMatrix::zeros(self.q, self.q);
        for (k, &p) in self.dims.iter().enumerate() {
            let o = self.offsets[k];
            out.view_mut((o, o), (p, p)).copy_from(&m.view((o, o), (p, p)));
        }
        Ok(out)
    }

    /// The off-block-diagonal part G(M) = M − D(M).
    pub fn off_diagonal_part(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(m - self.diagonal_part(m)?)
    }

    /// Degrees of freedom of the non-correlation test: Σ_{k>l} p_k p_l.
    pub fn off_diagonal_pairs(&self) -> usize {
        let mut d = 0;
        for k in 1..self.k() {
            for l in 0..k {
                d += self.dims[k] * self.dims[l];
            }
        }
        d
    }

    fn check_dim(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.nrows() != self.q || m.ncols() != self.q {
            return Err(Error::Input(format!(
                "matrix is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                self.q,
                self.q
            )));
        }
        Ok(())
    }
}
