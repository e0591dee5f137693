//! Dense symmetric linear algebra on top of nalgebra: deterministic sorted
//! eigendecompositions with a fixed sign convention, SPD square roots, and
//! the Cholesky-based utilities shared by the estimator and the influence
//! evaluations.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// In-place symmetrization M ← (M + Mᵀ)/2, the drift control applied after
/// every step that is symmetric in exact arithmetic.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigendecomposition of a symmetric matrix with a deterministic
/// presentation: eigenvalues descending, exact ties broken by lexicographic
/// comparison of the sign-fixed eigenvectors, and every eigenvector scaled
/// so its first nonzero coordinate (threshold 1e-12, coordinates are unit
/// scale) is positive. Returns (values, column matrix of eigenvectors).
pub(crate) fn sym_eigen_sorted(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut cols: Vec<(f64, DVector<f64>)> = (0..n)
        .map(|i| {
            let mut v = eig.eigenvectors.column(i).into_owned();
            fix_sign(&mut v);
            (eig.eigenvalues[i], v)
        })
        .collect();
    cols.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("symmetric eigenvalues are finite")
            .then_with(|| lex_cmp(&a.1, &b.1))
    });
    let values = DVector::from_iterator(n, cols.iter().map(|c| c.0));
    let mut vectors = DMatrix::zeros(n, n);
    for (i, (_, v)) in cols.iter().enumerate() {
        vectors.set_column(i, v);
    }
    (values, vectors)
}

fn fix_sign(v: &mut DVector<f64>) {
    for i in 0..v.len() {
        if v[i].abs() > 1e-12 {
            if v[i] < 0.0 {
                v.neg_mut();
            }
            return;
        }
    }
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for i in 0..a.len() {
        match a[i].partial_cmp(&b[i]).expect("eigenvector coordinates are finite") {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// SPD square root via eigendecomposition. Eigenvalues at or below `min_eig`
/// make the matrix unusable and are reported as a singular-scatter error;
/// callers that know which block they are factoring remap via
/// [`spd_power_checked`].
pub(crate) fn spd_sqrt(m: &DMatrix<f64>, min_eig: f64) -> Result<DMatrix<f64>> {
    spd_power_checked(m, 0.5, min_eig)
        .map_err(|ev| Error::SingularScatter(format!("eigenvalue {ev:e} at or below {min_eig:e}")))
}

/// Symmetric matrix power through the eigendecomposition; `Err` carries the
/// offending eigenvalue so callers can attach their own context.
pub(crate) fn spd_power_checked(
    m: &DMatrix<f64>,
    p: f64,
    min_eig: f64,
) -> std::result::Result<DMatrix<f64>, f64> {
    let (values, vectors) = sym_eigen_sorted(m);
    let n = m.nrows();
    let mut scaled = vectors.clone();
    for i in 0..n {
        let lambda = values[i];
        if lambda <= min_eig {
            return Err(lambda);
        }
        let f = lambda.powf(p);
        scaled.column_mut(i).scale_mut(f);
    }
    let mut out = &scaled * vectors.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Cholesky factorization that reports failure as a singular-scatter error,
/// plus a cheap condition gate: the squared ratio of extreme Cholesky
/// diagonal entries estimates cond₂ and must stay at or below 1e14.
pub(crate) fn cholesky_gate(g: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularScatter("Cholesky factorization failed".into()))?;
    let l = chol.l_dirty();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..g.nrows() {
        let d = l[(i, i)];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let cond = (hi / lo) * (hi / lo);
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::SingularScatter(format!("condition estimate {cond:.3e} exceeds 1e14")));
    }
    Ok(chol)
}

/// Spectral norm (largest eigenvalue magnitude) of a symmetric matrix.
pub(crate) fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    let (values, _) = sym_eigen_sorted(m);
    values.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}
