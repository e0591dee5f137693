//! Samplers for elliptical models with optional contamination, used by the
//! Monte Carlo tests and the CLI simulator.
//!
//! Rows are generated from independent counter-keyed streams (seed, row
//! index), so a dataset is reproducible bit-for-bit regardless of generation
//! order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};

use crate::blocks::BlockStructure;
use crate::error::{Error, Result};
use crate::linalg::{spd_sqrt, symmetrize};
use crate::sestimator::Dataset;

/// Radial family of the elliptical model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Gaussian,
    /// Multivariate Student: the Gaussian row divided by √(χ²_df/df).
    Student { df: f64 },
}

/// Row-replacement contamination applied independently with probability ε.
#[derive(Debug, Clone, PartialEq)]
pub enum Contamination {
    /// Replace by a fixed point — the point-mass scheme the influence
    /// functions are derivatives against.
    Point { epsilon: f64, point: DVector<f64> },
    /// Replace by the point plus a standard Gaussian perturbation; useful
    /// for power studies where an exact atom is too easy to filter.
    Diffuse { epsilon: f64, point: DVector<f64> },
}

impl Contamination {
    fn epsilon(&self) -> f64 {
        match self {
            Contamination::Point { epsilon, .. } | Contamination::Diffuse { epsilon, .. } => {
                *epsilon
            }
        }
    }

    fn point(&self) -> &DVector<f64> {
        match self {
            Contamination::Point { point, .. } | Contamination::Diffuse { point, .. } => point,
        }
    }
}

/// A fully specified sampling model: SPD scatter, coordinate partition,
/// radial family, and an optional contamination scheme.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    v: DMatrix<f64>,
    blocks: BlockStructure,
    family: Family,
    contamination: Option<Contamination>,
    sqrt_v: DMatrix<f64>,
}

impl ModelSpec {
    pub fn new(
        v: DMatrix<f64>,
        blocks: BlockStructure,
        family: Family,
        contamination: Option<Contamination>,
    ) -> Result<Self> {
        let q = blocks.q();
        if v.nrows() != q || v.ncols() != q {
            return Err(Error::Input(format!(
                "scatter is {}x{} but the blocks span {}",
                v.nrows(),
                v.ncols(),
                q
            )));
        }
        if v.iter().any(|e| !e.is_finite()) {
            return Err(Error::Input("scatter contains a non-finite entry".into()));
        }
        if (&v - v.transpose()).amax() > 1e-12 {
            return Err(Error::Input("scatter must be symmetric".into()));
        }
        let mut v = v;
        symmetrize(&mut v);
        let sqrt_v = spd_sqrt(&v, 0.0)?;
        if let Family::Student { df } = family {
            if !(df > 0.0) || !df.is_finite() {
                return Err(Error::Input(format!("student df must be positive, got {df}")));
            }
        }
        if let Some(c) = &contamination {
            let eps = c.epsilon();
            if !(0.0..0.5).contains(&eps) {
                return Err(Error::Input(format!(
                    "contamination fraction must lie in [0, 0.5), got {eps}"
                )));
            }
            if c.point().len() != q {
                return Err(Error::Input(format!(
                    "contamination point has dimension {} but the blocks span {}",
                    c.point().len(),
                    q
                )));
            }
            if c.point().iter().any(|e| !e.is_finite()) {
                return Err(Error::Input("contamination point has a non-finite entry".into()));
            }
        }
        Ok(Self { v, blocks, family, contamination, sqrt_v })
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn blocks(&self) -> &BlockStructure {
        &self.blocks
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn contamination(&self) -> Option<&Contamination> {
        self.contamination.as_ref()
    }
}

/// The independent-blocks model: V = identity. Under block-wise affine
/// invariance this is the canonical representative of the null hypothesis.
pub fn null_model(blocks: &BlockStructure, family: Family) -> Result<ModelSpec> {
    let q = blocks.q();
    ModelSpec::new(DMatrix::identity(q, q), blocks.clone(), family, None)
}

/// Draws n rows from the model. Row i is produced by the stream keyed
/// (seed, i): first the q Gaussian coordinates, then the Student divisor if
/// any, then the contamination decision — so the ε = 0 stream is identical
/// to the uncontaminated one.
pub fn sample(model: &ModelSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Input("sample size must be at least 1".into()));
    }
    let q = model.blocks.q();
    let chi = match model.family {
        Family::Student { df } => {
            Some(ChiSquared::new(df).expect("df validated at model construction"))
        }
        Family::Gaussian => None,
    };
    let mut rows = DMatrix::zeros(n, q);
    let mut row = DVector::zeros(q);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let z = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        row.gemv(1.0, &model.sqrt_v, &z, 0.0);
        if let Some(chi) = &chi {
            let w: f64 = rng.sample(chi);
            let df = match model.family {
                Family::Student { df } => df,
                Family::Gaussian => unreachable!(),
            };
            row /= (w / df).sqrt();
        }
        if let Some(c) = &model.contamination {
            let eps = c.epsilon();
            if eps > 0.0 && rng.gen::<f64>() < eps {
                row.copy_from(c.point());
                if let Contamination::Diffuse { .. } = c {
                    for k in 0..q {
                        row[k] += rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
        }
        rows.row_mut(i).tr_copy_from(&row);
    }
    Dataset::new(rows, model.blocks.clone())
}
