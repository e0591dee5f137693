//! Robust location/scatter estimation by constrained determinant minimization.
//!
//! The estimate is the pair (μ, V) minimizing det(V) subject to holding the
//! average bounded loss of the standardized residuals at its target value.
//! Minimization follows the fast-S pattern: many elementary starts built from
//! (q+1)-point subsamples, two cheap improvement steps for every start, and
//! full fixed-point iteration only for the few most promising candidates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::blocks::BlockStructure;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_gate, symmetrize};
use crate::loss::LossSpec;
use crate::numeric::brent;

/// A fixed sample of `n` observations in dimension `q`, carrying the
/// coordinate partition used by the downstream canonical-analysis stages.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// n × q, one observation per row.
    data: DMatrix<f64>,
    blocks: BlockStructure,
}

impl Dataset {
    /// Wraps an `n × q` matrix of observations (one per row) together with
    /// the coordinate partition. Every entry must be finite and the column
    /// count must equal the partition's total dimension.
    pub fn new(data: DMatrix<f64>, blocks: BlockStructure) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Input("dataset has no rows".into()));
        }
        if data.ncols() != blocks.q() {
            return Err(Error::Input(format!(
                "data has {} columns but the block structure spans {}",
                data.ncols(),
                blocks.q()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("dataset contains a non-finite entry".into()));
        }
        Ok(Self { data, blocks })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn q(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn blocks(&self) -> &BlockStructure {
        &self.blocks
    }
}

/// Result of the robust fit.
#[derive(Debug, Clone)]
pub struct SEstimate {
    /// Location estimate.
    pub mu: DVector<f64>,
    /// Scatter estimate; symmetric positive definite, scaled so the loss
    /// constraint holds with equality.
    pub v: DMatrix<f64>,
    /// det(v).
    pub det: f64,
    /// Total improvement steps applied to the winning candidate (the two
    /// seeding steps plus the full refinement).
    pub iterations: usize,
    /// Whether the winning candidate's refinement met the relative
    /// determinant tolerance before the iteration cap.
    pub converged: bool,
    /// Signed residual of the loss constraint, mean ξ(dᵢ) − b₀, at (mu, v).
    pub constraint_residual: f64,
}

/// Tuning knobs for [`s_estimate`]. The defaults trade a dense candidate
/// sweep against full refinement of only the strongest few.
#[derive(Debug, Clone)]
pub struct SConfig {
    /// Number of elementary subsample candidates.
    pub n_subsamples: usize,
    /// Iteration cap for full refinement of a kept candidate.
    pub max_refinement_iters: usize,
    /// Relative determinant change declaring convergence.
    pub tol: f64,
    /// Seed for subsample selection; results are reproducible bit-for-bit
    /// for a fixed seed, independent of thread count.
    pub seed: u64,
    /// How many of the best candidates are refined to convergence.
    pub keep_best: usize,
}

impl Default for SConfig {
    fn default() -> Self {
        Self { n_subsamples: 500, max_refinement_iters: 200, tol: 1e-9, seed: 0, keep_best: 10 }
    }
}

/// Distances dᵢ = ‖G^{−1/2}(xᵢ − μ)‖ for every row of `data`, computed by a
/// triangular solve against the Cholesky factor of `G`.
pub fn mahalanobis_distances(
    data: &Dataset,
    mu: &DVector<f64>,
    g: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let q = data.q();
    if mu.len() != q || g.nrows() != q || g.ncols() != q {
        return Err(Error::Input(format!(
            "location/scatter of dimension {}/{}x{} against q = {}",
            mu.len(),
            g.nrows(),
            g.ncols(),
            q
        )));
    }
    let chol = cholesky_gate(g)?;
    let l = chol.l();
    let x = data.matrix();
    let n = data.n();
    let mut d = DVector::zeros(n);
    let mut z = DVector::zeros(q);
    for i in 0..n {
        for j in 0..q {
            z[j] = x[(i, j)] - mu[j];
        }
        if !l.solve_lower_triangular_mut(&mut z) {
            return Err(Error::SingularScatter("zero pivot in triangular solve".into()));
        }
        d[i] = z.norm();
    }
    Ok(d)
}

/// Solves mean ξ(dᵢ/√s) = b₀ for s > 0, so that `s·G` puts the sample
/// exactly on the loss constraint. The left side is nonincreasing in s; a
/// bracket is grown geometrically from s = 1 and the root is polished by
/// Brent's method.
pub fn constraint_scale(
    data: &Dataset,
    mu: &DVector<f64>,
    g: &DMatrix<f64>,
    spec: &LossSpec,
) -> Result<f64> {
    let d = mahalanobis_distances(data, mu, g)?;
    constraint_scale_from_distances(d.as_slice(), spec)
}

pub(crate) fn constraint_scale_from_distances(d: &[f64], spec: &LossSpec) -> Result<f64> {
    if d.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateData("all residual distances are zero".into()));
    }
    let inv_n = 1.0 / d.len() as f64;
    let target = spec.b0();
    let f = |s: f64| {
        let rs = s.sqrt();
        d.iter().map(|&x| spec.xi(x / rs)).sum::<f64>() * inv_n - target
    };

    const LO_LIMIT: f64 = 1e-12;
    const HI_LIMIT: f64 = 1e12;
    let f1 = f(1.0);
    if f1 == 0.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (1.0, 1.0);
    if f1 > 0.0 {
        hi = 4.0;
        while f(hi) > 0.0 {
            lo = hi;
            hi *= 4.0;
            if hi > HI_LIMIT {
                return Err(Error::Scale);
            }
        }
    } else {
        lo = 0.25;
        while f(lo) < 0.0 {
            hi = lo;
            lo *= 0.25;
            if lo < LO_LIMIT {
                return Err(Error::Scale);
            }
        }
    }
    brent(&f, lo, hi, 0.0, 200).ok_or(Error::Scale)
}

/// One fixed-point improvement step: reweight by wᵢ = ψ(dᵢ)/dᵢ (continuously
/// extended to 1 at dᵢ = 0), recenter, re-estimate the scatter shape, and
/// rescale it back onto the constraint. Never increases the determinant.
pub fn refinement_step(
    data: &Dataset,
    mu: &DVector<f64>,
    g: &DMatrix<f64>,
    spec: &LossSpec,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = mahalanobis_distances(data, mu, g)?;
    let n = data.n();
    let q = data.q();
    let x = data.matrix();

    let w: Vec<f64> = d.iter().map(|&di| spec.weight(di)).collect();
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return Err(Error::EmptyWeight);
    }

    let mut mu2 = DVector::zeros(q);
    for i in 0..n {
        for j in 0..q {
            mu2[j] += w[i] * x[(i, j)];
        }
    }
    mu2 /= sw;

    // G″ = (1/n) Σ wᵢ (xᵢ−μ′)(xᵢ−μ′)ᵀ
    let mut c = DMatrix::zeros(n, q);
    for i in 0..n {
        for j in 0..q {
            c[(i, j)] = x[(i, j)] - mu2[j];
        }
    }
    let mut wc = c.clone();
    for i in 0..n {
        wc.row_mut(i).scale_mut(w[i]);
    }
    let mut g2 = c.transpose() * &wc;
    g2.unscale_mut(n as f64);
    symmetrize(&mut g2);

    let d2 = mahalanobis_distances(data, &mu2, &g2).map_err(|e| match e {
        Error::SingularScatter(_) => Error::SingularStep,
        other => other,
    })?;
    let s = constraint_scale_from_distances(d2.as_slice(), spec)?;
    Ok((mu2, g2 * s))
}

const MAX_DRAW_ATTEMPTS: usize = 10;

struct Candidate {
    index: usize,
    mu: DVector<f64>,
    g: DMatrix<f64>,
    det: f64,
}

struct Refined {
    index: usize,
    mu: DVector<f64>,
    g: DMatrix<f64>,
    det: f64,
    iterations: usize,
    converged: bool,
}

/// Robust fit of location and scatter. Deterministic for a fixed
/// `config.seed`: every candidate draws its subsample from its own RNG
/// stream and the winner is selected by (determinant, candidate index), so
/// the result does not depend on thread count or scheduling.
pub fn s_estimate(data: &Dataset, spec: &LossSpec, config: &SConfig) -> Result<SEstimate> {
    let n = data.n();
    let q = data.q();
    if spec.dimension() != q {
        return Err(Error::Input(format!(
            "loss tuned for dimension {} but data has q = {}",
            spec.dimension(),
            q
        )));
    }
    if n < q + 1 {
        return Err(Error::Input(format!("need at least q+1 = {} observations, got {}", q + 1, n)));
    }
    if config.n_subsamples == 0 || config.max_refinement_iters == 0 || config.keep_best == 0 {
        return Err(Error::Input("all SConfig counts must be positive".into()));
    }
    if !(config.tol > 0.0) {
        return Err(Error::Input("SConfig tol must be positive".into()));
    }

    let seeded: Vec<Candidate> = (0..config.n_subsamples)
        .into_par_iter()
        .map(|idx| seed_candidate(data, spec, config.seed, idx))
        .collect::<Vec<Option<Candidate>>>()
        .into_iter()
        .flatten()
        .collect();
    if seeded.is_empty() {
        return Err(Error::DegenerateData(
            "every subsample was singular; data may lie on a lower-dimensional subspace".into(),
        ));
    }

    let mut order: Vec<usize> = (0..seeded.len()).collect();
    order.sort_by(|&a, &b| {
        seeded[a]
            .det
            .total_cmp(&seeded[b].det)
            .then(seeded[a].index.cmp(&seeded[b].index))
    });
    let kept = config.keep_best.min(order.len());

    let refined: Vec<Refined> = order[..kept]
        .par_iter()
        .map(|&i| refine_fully(data, spec, config, &seeded[i]))
        .collect::<Vec<Option<Refined>>>()
        .into_iter()
        .flatten()
        .collect();
    let best = refined
        .into_iter()
        .min_by(|a, b| a.det.total_cmp(&b.det).then(a.index.cmp(&b.index)))
        .ok_or_else(|| {
            Error::DegenerateData("every retained candidate failed during refinement".into())
        })?;

    let d = mahalanobis_distances(data, &best.mu, &best.g)?;
    let mean_loss = d.iter().map(|&x| spec.xi(x)).sum::<f64>() / n as f64;
    Ok(SEstimate {
        mu: best.mu,
        v: best.g,
        det: best.det,
        iterations: best.iterations,
        converged: best.converged,
        constraint_residual: mean_loss - spec.b0(),
    })
}

/// Elementary start for one candidate: keep drawing (q+1)-point subsamples
/// from the candidate's own RNG stream until one has a nonsingular shape
/// (at most [`MAX_DRAW_ATTEMPTS`] draws), rescale its moments onto the
/// constraint, then apply two improvement steps.
fn seed_candidate(data: &Dataset, spec: &LossSpec, seed: u64, idx: usize) -> Option<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx as u64);
    let n = data.n();
    let q = data.q();
    for _ in 0..MAX_DRAW_ATTEMPTS {
        let subset = sample_indices(&mut rng, n, q + 1);
        let (m0, c0) = subset_moments(data, &subset);
        if cholesky_gate(&c0).is_err() {
            continue;
        }
        let Ok(d0) = mahalanobis_distances(data, &m0, &c0) else { continue };
        let Ok(s0) = constraint_scale_from_distances(d0.as_slice(), spec) else { continue };
        let mut mu = m0;
        let mut g = c0 * s0;
        for _ in 0..2 {
            match refinement_step(data, &mu, &g, spec) {
                Ok((m2, g2)) => {
                    mu = m2;
                    g = g2;
                }
                // a start that collapses mid-step is dropped, not redrawn
                Err(_) => return None,
            }
        }
        let det = g.determinant();
        return Some(Candidate { index: idx, mu, g, det });
    }
    None
}

fn refine_fully(data: &Dataset, spec: &LossSpec, config: &SConfig, cand: &Candidate) -> Option<Refined> {
    let mut mu = cand.mu.clone();
    let mut g = cand.g.clone();
    let mut det = cand.det;
    // the two seeding steps count toward the iteration total
    let mut iterations = 2usize;
    let mut converged = false;
    for _ in 0..config.max_refinement_iters {
        let Ok((m2, g2)) = refinement_step(data, &mu, &g, spec) else { return None };
        let det2 = g2.determinant();
        iterations += 1;
        let rel = (det - det2).abs() / det.abs().max(f64::MIN_POSITIVE);
        mu = m2;
        g = g2;
        det = det2;
        if rel < config.tol {
            converged = true;
            break;
        }
    }
    Some(Refined { index: cand.index, mu, g, det, iterations, converged })
}

/// Floyd's subset sampling: k distinct indices in [0, n), order-normalized.
fn sample_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    debug_assert!(0 < k && k <= n);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for j in (n - k)..n {
        let t = rng.gen_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    chosen
}

fn subset_moments(data: &Dataset, idx: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let q = data.q();
    let x = data.matrix();
    let m = idx.len() as f64;
    let mut mean = DVector::zeros(q);
    for &i in idx {
        for j in 0..q {
            mean[j] += x[(i, j)];
        }
    }
    mean /= m;
    let mut cov = DMatrix::zeros(q, q);
    let mut z = DVector::zeros(q);
    for &i in idx {
        for j in 0..q {
            z[j] = x[(i, j)] - mean[j];
        }
        cov.ger(1.0, &z, &z, 1.0);
    }
    cov /= m;
    symmetrize(&mut cov);
    (mean, cov)
}
