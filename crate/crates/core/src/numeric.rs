//! Scalar numerics shared by the tuning, constants, and estimation paths:
//! adaptive Simpson quadrature, Brent root-finding, and plain bisection.
//!
//! These are hand-rolled so the two hottest deterministic paths (constraint
//! rescaling and cutoff tuning) stay bit-reproducible and under our control.

use crate::error::{Error, Result};

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `abs_tol`, by recursive interval subdivision with the usual 15x error
/// estimate. The range is pre-split into fixed panels so localized mass
/// cannot hide between the initial sample points. Depth is capped; hitting
/// the cap means the integrand is wilder than anything this crate produces,
/// and is reported as a constants error.
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    let panel_tol = abs_tol / PANELS as f64;
    let mut bad = false;
    let mut total = 0.0;
    for i in 0..PANELS {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == PANELS { b } else { a + (i + 1) as f64 * h };
        let flo = f(lo);
        let fhi = f(hi);
        let m = 0.5 * (lo + hi);
        let fm = f(m);
        let whole = simpson(lo, hi, flo, fm, fhi);
        total += simpson_rec(f, lo, hi, flo, fm, fhi, whole, panel_tol, 56, &mut bad);
    }
    if bad {
        return Err(Error::Constants { tol: abs_tol });
    }
    Ok(total)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    bad: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *bad = true;
        return left + right;
    }
    let half = 0.5 * tol;
    simpson_rec(f, a, m, fa, flm, fm, left, half, depth - 1, bad)
        + simpson_rec(f, m, b, fm, frm, fb, right, half, depth - 1, bad)
}

/// Brent's method on a bracket `[a, b]` with `f(a)` and `f(b)` of opposite
/// sign (a zero of either endpoint is returned directly). Converges to
/// machine-level `x` accuracy: the loop stops when the interval shrinks
/// below `xtol + 4*eps*|x|`.
pub(crate) fn brent<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Some(b);
        }
        if e.abs() < tol || fa.abs() <= fb.abs() {
            // Bisection.
            d = m;
            e = m;
        } else {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                // Secant.
                (2.0 * m * s, 1.0 - s)
            } else {
                // Inverse quadratic interpolation.
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if fb == 0.0 {
            return Some(b);
        }
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    Some(b)
}

/// Plain bisection on a sign-changing bracket; `steps` halvings. Used by the
/// cutoff tuning, where robustness beats speed and the iteration count is
/// part of the contract (non-convergence within the step budget is an error).
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, xtol: f64, steps: usize) -> Option<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= xtol * mid.abs().max(1.0) {
            return Some(mid);
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Some(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    None
}
