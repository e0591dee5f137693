//! The bounded loss family (Tukey biweight), its tuning, and the asymptotic
//! constants γ₁, γ₂, β₃ evaluated under the Gaussian density generator.
//!
//! The loss is ξ(t) = (c²/6)(1 − (1 − t²/c²)³) for |t| ≤ c and c²/6 beyond;
//! ψ is its derivative t(1 − t²/c²)², which redescends to 0 at ±c. The cutoff
//! c is tuned so that E ξ(‖Z‖) = breakdown · ξ(c) for a standard Gaussian Z
//! in dimension q, which simultaneously fixes the constraint target b₀ and
//! makes the scatter estimate Fisher-consistent at the Gaussian model.

use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, bisect};
use statrs::function::gamma::{gamma_ur, ln_gamma};

/// Quadrature tolerance for the asymptotic constants.
const QUAD_TOL: f64 = 1e-10;

/// A tuned bounded loss: cutoff, constraint target, the dimension and
/// breakdown it was tuned for.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    cutoff: f64,
    b0: f64,
    dimension: usize,
    breakdown: f64,
}

/// The scalar constants entering the influence functions and the test
/// normalizers: γ₁ and γ₂ scale the scatter IF, β₃ the first-moment
/// normalizer. All are radial expectations under the chi distribution with
/// q degrees of freedom (Gaussian reference).
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticConstants {
    pub gamma1: f64,
    pub gamma2: f64,
    pub beta3: f64,
    pub dimension: usize,
}

impl LossSpec {
    /// Builds a spec from an explicit cutoff and constraint target.
    /// The breakdown is derived as b₀/ξ(c).
    pub fn new(cutoff: f64, b0: f64, dimension: usize) -> Result<Self> {
        if !(cutoff > 0.0) || !cutoff.is_finite() {
            return Err(Error::Input(format!("cutoff must be positive and finite, got {cutoff}")));
        }
        if dimension == 0 {
            return Err(Error::Input("dimension must be at least 1".into()));
        }
        let xi_max = cutoff * cutoff / 6.0;
        if !(b0 > 0.0) || b0 > xi_max {
            return Err(Error::Input(format!(
                "b0 must lie in (0, xi(cutoff)] = (0, {xi_max}], got {b0}"
            )));
        }
        Ok(Self { cutoff, b0, dimension, breakdown: b0 / xi_max })
    }

    /// Tunes the cutoff for dimension `q` and the requested breakdown:
    /// the unique c solving E ξ_c(‖Z‖) = breakdown · c²/6 with Z standard
    /// Gaussian in dimension q. The expectation is a chi-q radial integral;
    /// the root is found by bisection (200 halvings on a fixed bracket).
    pub fn tune(q: usize, breakdown: f64) -> Result<Self> {
        if q == 0 {
            return Err(Error::Input("dimension must be at least 1".into()));
        }
        if !(breakdown > 0.0 && breakdown <= 0.5) {
            return Err(Error::Input(format!("breakdown must lie in (0, 0.5], got {breakdown}")));
        }
        let objective = |c: f64| expected_xi(c, q) - breakdown * c * c / 6.0;
        // E ξ_c → c²/6 as c → 0 (everything beyond the cutoff) and → q/2 as
        // c → ∞, so the objective goes from positive to negative on [lo, hi].
        let c = bisect(&objective, 0.05, 100.0, 1e-13, 200)
            .ok_or(Error::Tuning { q, breakdown })?;
        let b0 = breakdown * c * c / 6.0;
        Ok(Self { cutoff: c, b0, dimension: q, breakdown })
    }

    /// The cutoff c.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// The constraint target b₀.
    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// The dimension q the spec was tuned for.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// The breakdown value b₀/ξ(c).
    pub fn breakdown(&self) -> f64 {
        self.breakdown
    }

    /// The loss ξ(t): (c²/6)(1 − (1 − t²/c²)³) inside [−c, c], c²/6 beyond.
    /// Even in t, nondecreasing in |t|.
    pub fn xi(&self, t: f64) -> f64 {
        xi_raw(t, self.cutoff)
    }

    /// The score ψ = ξ′: t(1 − t²/c²)² inside [−c, c], zero beyond.
    pub fn psi(&self, t: f64) -> f64 {
        let c = self.cutoff;
        if t.abs() > c {
            return 0.0;
        }
        let u = 1.0 - (t / c) * (t / c);
        t * u * u
    }

    /// The analytic derivative ψ′(t) = (1 − t²/c²)² − 4(t²/c²)(1 − t²/c²)
    /// inside [−c, c], zero beyond.
    pub fn psi_prime(&self, t: f64) -> f64 {
        let c = self.cutoff;
        if t.abs() > c {
            return 0.0;
        }
        let s = (t / c) * (t / c);
        let u = 1.0 - s;
        u * u - 4.0 * s * u
    }

    /// The reweighting factor ψ(t)/t with its continuous extension 1 at
    /// t = 0; bounded by 1 everywhere.
    pub fn weight(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 1.0;
        }
        if t.abs() > self.cutoff {
            return 0.0;
        }
        let u = 1.0 - (t / self.cutoff) * (t / self.cutoff);
        u * u
    }
}

/// Computes γ₁, γ₂, β₃ for a tuned loss by adaptive quadrature of the chi-q
/// radial integrals on [0, c] (the integrands carry ψ or ψ′ and vanish
/// beyond the cutoff).
pub fn compute_constants(spec: &LossSpec) -> Result<AsymptoticConstants> {
    let q = spec.dimension;
    let c = spec.cutoff;
    let qf = q as f64;
    let gamma2 = adaptive_simpson(&|r| spec.psi(r) * r * chi_pdf(r, q), 0.0, c, QUAD_TOL)?;
    let gamma1 = adaptive_simpson(
        &|r| (spec.psi_prime(r) * r * r + (qf + 1.0) * spec.psi(r) * r) * chi_pdf(r, q),
        0.0,
        c,
        QUAD_TOL,
    )? / (qf + 2.0);
    let e_psi_r3 = adaptive_simpson(&|r| spec.psi(r) * r * r * r * chi_pdf(r, q), 0.0, c, QUAD_TOL)?;
    let beta3 = -2.0 / (qf + 2.0) * e_psi_r3;
    Ok(AsymptoticConstants { gamma1, gamma2, beta3, dimension: q })
}

/// ξ for an arbitrary cutoff, shared by the spec methods and the tuning
/// objective (which evaluates candidate cutoffs before a spec exists).
fn xi_raw(t: f64, c: f64) -> f64 {
    let t = t.abs();
    if t >= c {
        return c * c / 6.0;
    }
    let u = 1.0 - (t / c) * (t / c);
    c * c / 6.0 * (1.0 - u * u * u)
}

/// E ξ_c(R) for R chi-distributed with q degrees of freedom: quadrature on
/// [0, c] plus the closed-form plateau mass (c²/6)·P(R > c).
fn expected_xi(c: f64, q: usize) -> f64 {
    let body = adaptive_simpson(&|r| xi_raw(r, c) * chi_pdf(r, q), 0.0, c, 1e-12)
        .expect("xi integrand is a bounded polynomial times the chi density");
    let tail = c * c / 6.0 * gamma_ur(q as f64 / 2.0, c * c / 2.0);
    body + tail
}

/// Density of the chi distribution with q degrees of freedom.
pub(crate) fn chi_pdf(r: f64, q: usize) -> f64 {
    if r < 0.0 {
        return 0.0;
    }
    if r == 0.0 {
        // r^{q-1} at 0: the density is finite only for q = 1.
        return if q == 1 { (2.0 / std::f64::consts::PI).sqrt() } else { 0.0 };
    }
    let qf = q as f64;
    ((1.0 - qf / 2.0) * std::f64::consts::LN_2 - ln_gamma(qf / 2.0) + (qf - 1.0) * r.ln()
        - r * r / 2.0)
        .exp()
}
