//! The Euclidean extremal profile Φ(r) = (1 + r^{2−s})^{−(n−2)/(2−s)}, its
//! weighted integrals, the sharp constant K(n,s) and the second-order
//! expansion constants.
//!
//! Every integral over ℝⁿ of the form ∫ |X|^α (1 + |X|^{2−s})^{−β} dX
//! reduces, under t = r^{2−s}, to (ω_{n−1}/(2−s))·I_β^q with
//! q = (n+α)/(2−s) − 1, which is then a beta function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_half_line, Tolerance};
use crate::special::{aubin_integral, gamma, sphere_volume, AubinIntegralParams};

/// Dimension n ≥ 3 and singularity exponent s ∈ [0, 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub n: u32,
    pub s: f64,
    /// 2*(s) = 2(n−s)/(n−2)
    pub crit: f64,
}

impl BubbleParams {
    pub fn new(n: u32, s: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::domain(format!("dimension must be at least 3, got {n}")));
        }
        if !(0.0..2.0).contains(&s) {
            return Err(Error::domain(format!("s must lie in [0, 2), got {s}")));
        }
        let nf = n as f64;
        Ok(Self {
            n,
            s,
            crit: 2.0 * (nf - s) / (nf - 2.0),
        })
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// σ = 2 − s
    pub fn sigma(&self) -> f64 {
        2.0 - self.s
    }

    /// Decay exponent p = (n−2)/(2−s) of Φ in the variable t = r^{2−s}.
    pub fn profile_exponent(&self) -> f64 {
        (self.nf() - 2.0) / self.sigma()
    }

    /// ω_{n−1}, the area of the unit sphere in ℝⁿ.
    pub fn omega(&self) -> f64 {
        sphere_volume(self.n as i64 - 1).expect("n >= 3")
    }

    /// κ = (n−2)(n−s), the coefficient in ΔΦ = κ Φ^{2*−1}/r^s.
    pub fn kappa(&self) -> f64 {
        (self.nf() - 2.0) * (self.nf() - self.s)
    }
}

/// ln(1 + r^σ) without overflow for large r.
fn ln1p_pow(r: f64, sigma: f64) -> f64 {
    if r <= 1.0 {
        r.powf(sigma).ln_1p()
    } else {
        sigma * r.ln() + r.powf(-sigma).ln_1p()
    }
}

pub fn phi(params: &BubbleParams, r: f64) -> f64 {
    (-params.profile_exponent() * ln1p_pow(r, params.sigma())).exp()
}

/// Φ'(r) = −(n−2) r^{1−s} (1 + r^{2−s})^{−p−1}.
pub fn phi_prime(params: &BubbleParams, r: f64) -> f64 {
    if r == 0.0 {
        // r^{1−s} vanishes for s < 1 and blows up for s > 1.
        return match params.s.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => 0.0,
            Some(std::cmp::Ordering::Equal) => -(params.nf() - 2.0),
            _ => f64::NEG_INFINITY,
        };
    }
    let sigma = params.sigma();
    let p = params.profile_exponent();
    -(params.nf() - 2.0) * ((sigma - 1.0) * r.ln() - (p + 1.0) * ln1p_pow(r, sigma)).exp()
}

/// Φ''(r), differentiated term by term (not simplified).
pub fn phi_second(params: &BubbleParams, r: f64) -> f64 {
    let sigma = params.sigma();
    let p = params.profile_exponent();
    let l = ln1p_pow(r, sigma);
    let lr = r.ln();
    let a = (sigma - 1.0) * ((sigma - 2.0) * lr - (p + 1.0) * l).exp();
    let b = (p + 1.0) * sigma * ((2.0 * sigma - 2.0) * lr - (p + 2.0) * l).exp();
    -(params.nf() - 2.0) * (a - b)
}

/// The weighted integrals of Φ over ℝⁿ. Fields that diverge for the given
/// dimension are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleIntegrals {
    /// ∫|∇Φ|²
    pub dirichlet: f64,
    /// ∫Φ² (n ≥ 5)
    pub l2mass: Option<f64>,
    /// ∫Φ^{2*}/|X|^s
    pub weighted_crit: f64,
    /// ∫|X|²|∇Φ|² (n ≥ 5)
    pub moment2_grad: Option<f64>,
    /// ∫|X|^{2−s}Φ^{2*}
    pub moment_crit: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BubbleField {
    Dirichlet,
    L2mass,
    WeightedCrit,
    Moment2Grad,
    MomentCrit,
}

impl BubbleField {
    pub const ALL: [BubbleField; 5] = [
        BubbleField::Dirichlet,
        BubbleField::L2mass,
        BubbleField::WeightedCrit,
        BubbleField::Moment2Grad,
        BubbleField::MomentCrit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BubbleField::Dirichlet => "dirichlet",
            BubbleField::L2mass => "l2mass",
            BubbleField::WeightedCrit => "weighted_crit",
            BubbleField::Moment2Grad => "moment2_grad",
            BubbleField::MomentCrit => "moment_crit",
        }
    }

    /// (coefficient, α, β) such that the field is coef·∫|X|^α(1+r^σ)^{−β}.
    fn power_form(self, params: &BubbleParams) -> (f64, f64, f64) {
        let sigma = params.sigma();
        let p = params.profile_exponent();
        let g2 = (params.nf() - 2.0).powi(2);
        match self {
            BubbleField::Dirichlet => (g2, 2.0 * sigma - 2.0, 2.0 * p + 2.0),
            BubbleField::L2mass => (1.0, 0.0, 2.0 * p),
            BubbleField::WeightedCrit => (1.0, -params.s, params.crit * p),
            BubbleField::Moment2Grad => (g2, 2.0 * sigma, 2.0 * p + 2.0),
            BubbleField::MomentCrit => (1.0, sigma, params.crit * p),
        }
    }

    fn aubin_params(self, params: &BubbleParams) -> (f64, AubinIntegralParams) {
        let (coef, alpha, beta) = self.power_form(params);
        let q = (params.nf() + alpha) / params.sigma() - 1.0;
        (coef, AubinIntegralParams { p: beta, q })
    }

    /// Whether the integral converges at infinity.
    pub fn is_finite_for(self, params: &BubbleParams) -> bool {
        let (_, ap) = self.aubin_params(params);
        ap.validate().is_ok()
    }

    fn divergent(self, params: &BubbleParams) -> Error {
        Error::Divergent {
            field: self.name(),
            reason: format!(
                "integrand decays too slowly at infinity for n = {}, s = {}",
                params.n, params.s
            ),
        }
    }

    /// Closed-form value through I_p^q.
    pub fn closed_form(self, params: &BubbleParams) -> Result<f64> {
        let (coef, ap) = self.aubin_params(params);
        if ap.validate().is_err() {
            return Err(self.divergent(params));
        }
        Ok(coef * params.omega() / params.sigma() * aubin_integral(ap)?)
    }

    /// Direct radial quadrature of the field from Φ and Φ'.
    pub fn quadrature(self, params: &BubbleParams, rel_tol: f64) -> Result<f64> {
        if !self.is_finite_for(params) {
            return Err(self.divergent(params));
        }
        let n = params.nf();
        let s = params.s;
        let crit = params.crit;
        let pr = *params;
        // Integrands are assembled in log space: far out in r the individual
        // factors under/overflow while their product is tame.
        let ln_density = move |r: f64| -> f64 {
            let lr = r.ln();
            let lphi = phi(&pr, r).ln();
            let lgrad = (-phi_prime(&pr, r)).ln();
            match self {
                BubbleField::Dirichlet => (n - 1.0) * lr + 2.0 * lgrad,
                BubbleField::L2mass => (n - 1.0) * lr + 2.0 * lphi,
                BubbleField::WeightedCrit => (n - 1.0 - s) * lr + crit * lphi,
                BubbleField::Moment2Grad => (n + 1.0) * lr + 2.0 * lgrad,
                BubbleField::MomentCrit => (n + 1.0 - s) * lr + crit * lphi,
            }
        };
        let est = integrate_half_line(|r| ln_density(r).exp(), 1.0, Tolerance::relative(rel_tol))?;
        Ok(params.omega() * est.value)
    }
}

/// All finite fields, closed form.
pub fn bubble_integrals(params: &BubbleParams) -> Result<BubbleIntegrals> {
    let opt = |f: BubbleField| -> Result<Option<f64>> {
        if f.is_finite_for(params) {
            f.closed_form(params).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(BubbleIntegrals {
        dirichlet: BubbleField::Dirichlet.closed_form(params)?,
        l2mass: opt(BubbleField::L2mass)?,
        weighted_crit: BubbleField::WeightedCrit.closed_form(params)?,
        moment2_grad: opt(BubbleField::Moment2Grad)?,
        moment_crit: opt(BubbleField::MomentCrit)?,
    })
}

impl BubbleIntegrals {
    pub fn get(&self, field: BubbleField) -> Option<f64> {
        match field {
            BubbleField::Dirichlet => Some(self.dirichlet),
            BubbleField::L2mass => self.l2mass,
            BubbleField::WeightedCrit => Some(self.weighted_crit),
            BubbleField::Moment2Grad => self.moment2_grad,
            BubbleField::MomentCrit => self.moment_crit,
        }
    }
}

/// One closed-form / quadrature comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldComparison {
    pub n: u32,
    pub s: f64,
    pub field: String,
    pub closed_form: f64,
    pub quadrature: f64,
    pub rel_err: f64,
}

impl FieldComparison {
    fn new(params: &BubbleParams, field: impl Into<String>, closed_form: f64, quadrature: f64) -> Self {
        Self {
            n: params.n,
            s: params.s,
            field: field.into(),
            closed_form,
            quadrature,
            rel_err: (quadrature / closed_form - 1.0).abs(),
        }
    }
}

/// Computes every finite field both ways. Divergent fields are skipped.
pub fn compare_bubble_integrals(params: &BubbleParams) -> Result<Vec<FieldComparison>> {
    BubbleField::ALL
        .iter()
        .filter(|f| f.is_finite_for(params))
        .map(|&f| {
            Ok(FieldComparison::new(
                params,
                f.name(),
                f.closed_form(params)?,
                f.quadrature(params, 1e-13)?,
            ))
        })
        .collect()
}

/// The three integral-quotient identities. For each, `closed_form` is the
/// rational expression in (n, s) and `quadrature` the ratio of the two
/// quadrature integrals. Identities needing l2mass are omitted for n < 5.
pub fn integral_identities(params: &BubbleParams) -> Result<Vec<FieldComparison>> {
    let n = params.nf();
    let s = params.s;
    let q = |f: BubbleField| f.quadrature(params, 1e-13);
    let mut out = Vec::new();
    if params.n >= 5 {
        let l2 = q(BubbleField::L2mass)?;
        out.push(FieldComparison::new(
            params,
            "moment2_grad/l2mass",
            n * (n - 2.0) * (n + 2.0 - s) / (2.0 * (2.0 * n - 2.0 - s)),
            q(BubbleField::Moment2Grad)? / l2,
        ));
        out.push(FieldComparison::new(
            params,
            "moment_crit/l2mass",
            n * (n - 4.0) / (2.0 * (n - 2.0) * (2.0 * n - 2.0 - s)),
            q(BubbleField::MomentCrit)? / l2,
        ));
    }
    out.push(FieldComparison::new(
        params,
        "dirichlet/weighted_crit",
        params.kappa(),
        q(BubbleField::Dirichlet)? / q(BubbleField::WeightedCrit)?,
    ));
    Ok(out)
}

/// In dimension 3: ∫₀^∞ t^{2−s}(1 + t^{2−s})^{−(5−2s)/(2−s)} dt = 1/(3−s).
/// Returns (closed form, quadrature).
pub fn n3_normalization(s: f64) -> Result<(f64, f64)> {
    let params = BubbleParams::new(3, s)?;
    let sigma = params.sigma();
    let expo = (5.0 - 2.0 * s) / sigma;
    let est = integrate_half_line(
        |t| (sigma * t.ln() - expo * ln1p_pow(t, sigma)).exp(),
        1.0,
        Tolerance::relative(1e-13),
    )?;
    Ok((1.0 / (3.0 - s), est.value))
}

/// K(n,s) = (∫Φ^{2*}/|X|^s)^{2/2*} / ∫|∇Φ|², from the closed-form integrals.
pub fn sharp_constant(params: &BubbleParams) -> Result<f64> {
    let d = BubbleField::Dirichlet.closed_form(params)?;
    let w = BubbleField::WeightedCrit.closed_form(params)?;
    Ok(w.powf(2.0 / params.crit) / d)
}

/// The same ratio with both integrals from radial quadrature.
pub fn sharp_constant_quadrature(params: &BubbleParams) -> Result<f64> {
    let d = BubbleField::Dirichlet.quadrature(params, 1e-13)?;
    let w = BubbleField::WeightedCrit.quadrature(params, 1e-13)?;
    Ok(w.powf(2.0 / params.crit) / d)
}

/// K(n,s) = [(n−2)(n−s)]^{−1} (ω_{n−1}/(2−s) · Γ²((n−s)/(2−s)) / Γ(2(n−s)/(2−s)))^{−(2−s)/(n−s)}.
pub fn sharp_constant_gamma_form(params: &BubbleParams) -> Result<f64> {
    let n = params.nf();
    let s = params.s;
    let sigma = params.sigma();
    let a = (n - s) / sigma;
    let inner = params.omega() / sigma * gamma(a)?.powi(2) / gamma(2.0 * a)?;
    Ok(inner.powf(-sigma / (n - s)) / params.kappa())
}

/// C₁, C₂ and the curvature threshold c_{n,s}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConstants {
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c: f64,
}

/// c_{n,s} = (n−2)(6−s) / (12(2n−2−s)).
pub fn curvature_threshold(params: &BubbleParams) -> f64 {
    let n = params.nf();
    let s = params.s;
    (n - 2.0) * (6.0 - s) / (12.0 * (2.0 * n - 2.0 - s))
}

/// C₁ = ∫Φ² / ∫|∇Φ|², and
/// C₂ = ∫|X|²|∇Φ|² / (6n∫|∇Φ|²) − (2/2*)·∫|X|^{2−s}Φ^{2*} / (6n∫Φ^{2*}/|X|^s),
/// so that K·J(u_ε) − 1 = (C₁a − C₂Scal)ε² + o(ε²) for n ≥ 5.
/// Both are `None` below dimension 5.
pub fn expansion_constants(params: &BubbleParams) -> Result<ExpansionConstants> {
    let c = curvature_threshold(params);
    if params.n < 5 {
        return Ok(ExpansionConstants { c1: None, c2: None, c });
    }
    let (c1, c2) = c1_c2(params)?;
    Ok(ExpansionConstants {
        c1: Some(c1),
        c2: Some(c2),
        c,
    })
}

/// C₁ and C₂ or a divergence error naming ∫Φ² when n < 5.
pub fn c1_c2(params: &BubbleParams) -> Result<(f64, f64)> {
    let b = bubble_integrals(params)?;
    let l2 = b.l2mass.ok_or_else(|| BubbleField::L2mass.divergent(params))?;
    let m2 = b.moment2_grad.ok_or_else(|| BubbleField::Moment2Grad.divergent(params))?;
    let mc = b.moment_crit.ok_or_else(|| BubbleField::MomentCrit.divergent(params))?;
    let six_n = 6.0 * params.nf();
    let c1 = l2 / b.dirichlet;
    let c2 = m2 / (six_n * b.dirichlet) - (2.0 / params.crit) * mc / (six_n * b.weighted_crit);
    Ok((c1, c2))
}

/// ΔΦ = −Φ'' − (n−1)Φ'/r from the analytic derivatives, with the common
/// factor (n−2) r^{−s} (1+t)^{−p−2} pulled out so that the two O(t) terms
/// of the bracket cancel without losing the prefactor's digits.
pub fn laplacian_phi(params: &BubbleParams, r: f64) -> f64 {
    let n = params.nf();
    let sigma = params.sigma();
    let p = params.profile_exponent();
    let t = r.powf(sigma);
    // −Φ'' contributes (σ−1)(1+t) − (p+1)σt, −(n−1)Φ'/r contributes (n−1)(1+t)
    let bracket = (sigma - 1.0) * (1.0 + t) - (p + 1.0) * sigma * t + (n - 1.0) * (1.0 + t);
    (n - 2.0) * bracket * ((sigma - 2.0) * r.ln() - (p + 2.0) * ln1p_pow(r, sigma)).exp()
}

/// max over the grid of |ΔΦ − κΦ^{2*−1}/r^s| / |κΦ^{2*−1}/r^s|, with
/// ΔΦ = −Φ'' − (n−1)Φ'/r assembled from the analytic derivatives.
pub fn bubble_pde_residual(params: &BubbleParams, grid: &[f64]) -> Result<f64> {
    let kappa = params.kappa();
    let mut worst: f64 = 0.0;
    for &r in grid {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::domain(format!("grid radius {r} is not in (0, ∞)")));
        }
        let lap = laplacian_phi(params, r);
        let rhs = kappa * ((params.crit - 1.0) * phi(params, r).ln() - params.s * r.ln()).exp();
        worst = worst.max(((lap - rhs) / rhs).abs());
    }
    Ok(worst)
}

/// Log-spaced radii from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1).max(1) as f64).exp())
        .collect()
}

/// Relative change Q(Φ+δψ)/Q(Φ) − 1 of the Euclidean quotient
/// Q(u) = ∫|∇u|² / (∫|u|^{2*}/|X|^s)^{2/2*} for a radial ψ supported in
/// [`support.0`, `support.1`] ⊂ (0, ∞). Only the support is integrated;
/// the unperturbed integrals come from the closed forms.
pub fn perturbed_quotient_excess<P, DP>(
    params: &BubbleParams,
    psi: P,
    dpsi: DP,
    support: (f64, f64),
    delta: f64,
) -> Result<f64>
where
    P: Fn(f64) -> f64,
    DP: Fn(f64) -> f64,
{
    let (a, b) = support;
    if !(a > 0.0 && b > a) {
        return Err(Error::domain("perturbation support must be an interval in (0, ∞)"));
    }
    let n = params.nf();
    let tol = Tolerance::relative(1e-14);
    let d_grad = integrate(
        |r| {
            let dp = phi_prime(params, r);
            let dq = dpsi(r);
            (2.0 * dp * dq + delta * dq * dq) * r.powf(n - 1.0)
        },
        a,
        b,
        tol,
    )?
    .value
        * delta;
    let d_crit = integrate(
        |r| {
            let f = phi(params, r);
            let g = (f + delta * psi(r)).abs();
            // (g^c − f^c) written as f^c·expm1(c·ln(g/f)) to keep digits.
            f.powf(params.crit) * (params.crit * (g / f).ln()).exp_m1() * r.powf(n - 1.0 - params.s)
        },
        a,
        b,
        tol,
    )?
    .value;
    let omega = params.omega();
    let d = BubbleField::Dirichlet.closed_form(params)?;
    let w = BubbleField::WeightedCrit.closed_form(params)?;
    let log_ratio = (omega * d_grad / d).ln_1p() - (2.0 / params.crit) * (omega * d_crit / w).ln_1p();
    Ok(log_ratio.exp_m1())
}
