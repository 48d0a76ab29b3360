//! Gamma and beta functions, unit-sphere volumes and the radial integrals
//! I_p^q = ∫_0^∞ t^q (1+t)^{-p} dt together with their two recurrences.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_half_line, Tolerance};

/// Below this distance from the convergence boundary p − q − 1 = 0 an
/// Aubin integral is computed but tagged ill-conditioned.
pub const ILL_CONDITIONED_MARGIN: f64 = 0.05;

const STIRLING_SHIFT: f64 = 20.0;

// Bernoulli coefficients B_{2k} / (2k (2k-1)) of the Stirling series.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

fn stirling_correction(z: f64) -> f64 {
    let z2 = 1.0 / (z * z);
    let mut acc = 0.0;
    for c in STIRLING.iter().rev() {
        acc = acc * z2 + c;
    }
    acc / z
}

/// Γ(x) for x > 0, relative error below 1e-13 up to the overflow point.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("gamma requires x > 0, got {x}")));
    }
    if x > 171.6 {
        return Ok(f64::INFINITY);
    }
    // Shift upward so the Stirling series converges to full precision.
    let mut z = x;
    let mut denom = 1.0;
    while z < STIRLING_SHIFT {
        denom *= z;
        z += 1.0;
    }
    // Γ(z) = sqrt(2π/z) (z/e)^z exp(series); the power is split to delay overflow.
    let half_pow = (z / std::f64::consts::E).powf(0.5 * z);
    let gz = (2.0 * PI / z).sqrt() * half_pow * half_pow * stirling_correction(z).exp();
    Ok(gz / denom)
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    if x < 100.0 {
        return Ok(gamma(x)?.ln());
    }
    Ok((x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + stirling_correction(x))
}

/// B(a, b) = Γ(a)Γ(b)/Γ(a+b).
pub fn beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::domain(format!("beta requires a, b > 0, got ({a}, {b})")));
    }
    if a + b < 170.0 {
        Ok(gamma(a)? * gamma(b)? / gamma(a + b)?)
    } else {
        Ok((ln_gamma(a)? + ln_gamma(b)? - ln_gamma(a + b)?).exp())
    }
}

/// ω_k, the k-dimensional volume of the unit sphere S^k ⊂ ℝ^{k+1}.
pub fn sphere_volume(k: i64) -> Result<f64> {
    if k < 1 {
        return Err(Error::domain(format!("sphere dimension must be >= 1, got {k}")));
    }
    let h = 0.5 * (k as f64 + 1.0);
    Ok(2.0 * PI.powf(h) / gamma(h)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AubinIntegralParams {
    pub p: f64,
    pub q: f64,
}

impl AubinIntegralParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        let params = Self { p, q };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.q.is_finite()) {
            return Err(Error::domain("Aubin integral exponents must be finite"));
        }
        if !(self.q > -1.0) {
            return Err(Error::domain(format!("I_p^q requires q > -1, got q = {}", self.q)));
        }
        if !(self.p - self.q > 1.0) {
            return Err(Error::domain(format!(
                "I_p^q requires p - q > 1, got p = {}, q = {}",
                self.p, self.q
            )));
        }
        Ok(())
    }

    pub fn is_ill_conditioned(&self) -> bool {
        self.p - self.q - 1.0 < ILL_CONDITIONED_MARGIN
    }
}

/// I_p^q = ∫_0^∞ t^q (1+t)^{-p} dt = B(q+1, p−q−1).
pub fn aubin_integral(params: AubinIntegralParams) -> Result<f64> {
    params.validate()?;
    beta(params.q + 1.0, params.p - params.q - 1.0)
}

/// Direct quadrature of I_p^q; independent of the beta closed form.
pub fn aubin_integral_quadrature(params: AubinIntegralParams, rel_tol: f64) -> Result<f64> {
    params.validate()?;
    let AubinIntegralParams { p, q } = params;
    let est = integrate_half_line(
        |t| (q * t.ln() - p * t.ln_1p()).exp(),
        1.0,
        Tolerance::relative(rel_tol),
    )?;
    Ok(est.value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceSample {
    pub p: f64,
    pub q: f64,
    /// |I_{p+1}^q − ((p−q−1)/p) I_p^q| / |I_{p+1}^q|
    pub first: f64,
    /// |I_{p+1}^{q+1} − ((q+1)/(p−q−1)) I_{p+1}^q| / |I_{p+1}^{q+1}|
    pub second: f64,
    pub ill_conditioned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceReport {
    pub samples: Vec<RecurrenceSample>,
    /// Pairs that violate the parameter invariants and were skipped.
    pub skipped: Vec<(f64, f64)>,
    pub max_first: f64,
    pub max_second: f64,
}

impl RecurrenceReport {
    pub fn max_violation(&self) -> f64 {
        self.max_first.max(self.max_second)
    }
}

fn rel_violation(lhs: f64, rhs: f64) -> f64 {
    if lhs == rhs {
        0.0
    } else {
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs())
    }
}

/// Checks both recurrences of I_p^q on every (p, q) pair of the grid.
pub fn verify_aubin_recurrences(p_grid: &[f64], q_grid: &[f64]) -> RecurrenceReport {
    let pairs = p_grid
        .iter()
        .flat_map(|&p| q_grid.iter().map(move |&q| (p, q)));
    verify_aubin_pairs(pairs)
}

pub fn verify_aubin_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> RecurrenceReport {
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (p, q) in pairs {
        let Ok(params) = AubinIntegralParams::new(p, q) else {
            skipped.push((p, q));
            continue;
        };
        let eval = |p, q| aubin_integral(AubinIntegralParams { p, q });
        let (Ok(i_pq), Ok(i_p1q), Ok(i_p1q1)) = (eval(p, q), eval(p + 1.0, q), eval(p + 1.0, q + 1.0)) else {
            skipped.push((p, q));
            continue;
        };
        samples.push(RecurrenceSample {
            p,
            q,
            first: rel_violation(i_p1q, (p - q - 1.0) / p * i_pq),
            second: rel_violation(i_p1q1, (q + 1.0) / (p - q - 1.0) * i_p1q),
            ill_conditioned: params.is_ill_conditioned(),
        });
    }
    let max_first = samples.iter().map(|s| s.first).fold(0.0, f64::max);
    let max_second = samples.iter().map(|s| s.second).fold(0.0, f64::max);
    RecurrenceReport {
        samples,
        skipped,
        max_first,
        max_second,
    }
}

/// The default grid p ∈ [2, 10], q ∈ [0, p − 1.5], step 0.5.
pub fn default_recurrence_pairs() -> Vec<(f64, f64)> {
    let mut pairs = Vec::new();
    for i in 0..=16 {
        let p = 2.0 + 0.5 * i as f64;
        let mut q = 0.0;
        while q <= p - 1.5 + 1e-12 {
            pairs.push((p, q));
            q += 0.5;
        }
    }
    pairs
}
