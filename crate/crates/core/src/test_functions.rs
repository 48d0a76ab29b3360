//! The concentrating family u_ε(r) = ε^{−(n−2)/2} Φ(r/ε) on a round sphere,
//! its n = 3 correction v_ε = η u_ε + √ε β, the functional J on them, and
//! least-squares recovery of the leading ε-corrections to K·J − 1.
//!
//! For n ≥ 4, K·J(u_ε) − 1 is tiny (≈ ε²) and would drown in rounding if J
//! were formed first. In t = r/ε every integral is its ℝⁿ counterpart times
//! S(εt) = (sin(εt/R)/(εt/R))^{n−1}, so the code integrates S − 1 directly
//! and subtracts the tails beyond t = πR/ε; the excess is then assembled
//! with ln1p/expm1.

use serde::{Deserialize, Serialize};

use crate::bubble::{bubble_integrals, c1_c2, curvature_threshold, phi, phi_prime, sharp_constant, BubbleParams};
use crate::error::{Error, Result};
use crate::fit::{fit_model, relative_weights, select_model, FitModel, ModelFit};
use crate::geometry::{radial_derivatives, ModelManifold, RadialFunction, RadialGrid};
use crate::green::{GreenDecomposition, DEFAULT_RHO_FRACTION};
use crate::potential::{Cutoff, Potential};
use crate::quadrature::{integrate_from_zero, integrate_log, Tolerance};
use crate::special::sphere_volume;

/// ε samples per decade of the default list.
pub const EPS_PER_DECADE: usize = 12;

/// Default ε range as fractions of ρ.
pub const EPS_RANGE: (f64, f64) = (1e-4, 1e-2);

/// Fits whose relative RMS residual exceeds this are reported as
/// inconclusive.
pub const FIT_RESIDUAL_MAX: f64 = 5e-3;

const J_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFamily {
    pub manifold: ModelManifold,
    pub s: f64,
    pub a: Potential,
    /// Decreasing.
    pub eps_list: Vec<f64>,
    pub cutoff: Cutoff,
}

/// Geometric ε list, 12 per decade over [1e−4, 1e−2]·ρ, decreasing.
pub fn default_eps_list(rho: f64) -> Vec<f64> {
    log_eps_list(EPS_RANGE.0 * rho, EPS_RANGE.1 * rho)
}

/// Decreasing, log-spaced ε from `hi` down to `lo`, EPS_PER_DECADE per decade.
pub fn eps_range_list(lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::domain(format!("ε range needs 0 < min < max, got [{lo}, {hi}]")));
    }
    Ok(log_eps_list(lo, hi))
}

fn log_eps_list(lo: f64, hi: f64) -> Vec<f64> {
    let count = (((hi / lo).log10() * EPS_PER_DECADE as f64).round() as usize).max(1) + 1;
    (0..count)
        .map(|k| hi * (lo / hi).powf(k as f64 / (count - 1) as f64))
        .collect()
}

impl TestFamily {
    pub fn new(manifold: ModelManifold, s: f64, a: Potential, eps_list: Vec<f64>, rho: f64) -> Result<Self> {
        manifold.validate()?;
        BubbleParams::new(manifold.n, s)?;
        a.validate()?;
        let cutoff = Cutoff::new(rho)?;
        if rho >= 0.5 * manifold.injectivity_radius() {
            return Err(Error::domain(format!(
                "cutoff radius {rho} must stay below half the injectivity radius"
            )));
        }
        if eps_list.is_empty() || !eps_list.iter().all(|&e| e > 0.0 && e.is_finite()) {
            return Err(Error::domain("ε list must be non-empty and positive"));
        }
        if !eps_list.windows(2).all(|w| w[1] < w[0]) {
            return Err(Error::domain("ε list must be strictly decreasing"));
        }
        if eps_list[0] > rho / 10.0 {
            return Err(Error::domain(format!(
                "largest ε {} exceeds ρ/10 = {}",
                eps_list[0],
                rho / 10.0
            )));
        }
        Ok(Self {
            manifold,
            s,
            a,
            eps_list,
            cutoff,
        })
    }

    /// ρ = 0.4R and the default ε list.
    pub fn with_defaults(manifold: ModelManifold, s: f64, a: Potential) -> Result<Self> {
        let rho = DEFAULT_RHO_FRACTION * manifold.radius;
        Self::new(manifold, s, a, default_eps_list(rho), rho)
    }

    pub fn params(&self) -> BubbleParams {
        BubbleParams::new(self.manifold.n, self.s).expect("validated on construction")
    }
}

/// u_ε(r) = (ε^{1−s/2}/(ε^{2−s} + r^{2−s}))^{(n−2)/(2−s)} = ε^{−(n−2)/2} Φ(r/ε).
pub fn u_eps(family: &TestFamily, eps: f64, r: f64) -> f64 {
    let p = family.params();
    eps.powf(-0.5 * (p.nf() - 2.0)) * phi(&p, r / eps)
}

/// ∂_r u_ε
pub fn u_eps_prime(family: &TestFamily, eps: f64, r: f64) -> f64 {
    let p = family.params();
    eps.powf(-0.5 * p.nf()) * phi_prime(&p, r / eps)
}

fn check_green(family: &TestFamily, green: &GreenDecomposition) -> Result<()> {
    if family.manifold.n != 3 {
        return Err(Error::domain(format!(
            "v_ε is defined in dimension 3, got {}",
            family.manifold.n
        )));
    }
    if green.manifold != family.manifold || green.cutoff != family.cutoff {
        return Err(Error::domain(
            "the Green's function must be computed on the same sphere with the same cutoff",
        ));
    }
    Ok(())
}

/// v_ε = η u_ε + √ε β (n = 3).
pub fn v_eps(family: &TestFamily, green: &GreenDecomposition, eps: f64, r: f64) -> Result<f64> {
    check_green(family, green)?;
    Ok(family.cutoff.value(r) * u_eps(family, eps, r) + eps.sqrt() * green.beta_at(r).0)
}

/// ∂_r v_ε
pub fn v_eps_prime(family: &TestFamily, green: &GreenDecomposition, eps: f64, r: f64) -> Result<f64> {
    check_green(family, green)?;
    let (eta, deta, _) = family.cutoff.eval(r);
    Ok(deta * u_eps(family, eps, r) + eta * u_eps_prime(family, eps, r) + eps.sqrt() * green.beta_at(r).1)
}

/// The three integrals making up J.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JParts {
    /// ∫|∇u|²
    pub gradient: f64,
    /// ∫a u²
    pub potential: f64,
    /// ∫|u|^{2*}/d^s
    pub weighted: f64,
}

impl JParts {
    pub fn value(&self, crit: f64) -> Result<f64> {
        if !(self.weighted > 0.0) {
            return Err(Error::domain("J is undefined for u ≡ 0"));
        }
        let j = (self.gradient + self.potential) / self.weighted.powf(2.0 / crit);
        if !j.is_finite() {
            return Err(Error::Quadrature("non-finite value of J".into()));
        }
        Ok(j)
    }
}

/// J of grid samples: derivatives by finite differences, integrals by the
/// grid's Fejér weights.
pub fn evaluate_j(family: &TestFamily, grid: &RadialGrid, u: &RadialFunction) -> Result<f64> {
    if u.len() != grid.len() {
        return Err(Error::domain("function and grid sizes differ"));
    }
    if u.values.iter().all(|&v| v == 0.0) {
        return Err(Error::domain("J is undefined for u ≡ 0"));
    }
    let p = family.params();
    let m = &family.manifold;
    let (du, _) = radial_derivatives(grid, &u.values);
    let grad: Vec<f64> = du.iter().map(|d| d * d).collect();
    let pot: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&u.values)
        .map(|(&r, v)| family.a.value(r) * v * v)
        .collect();
    let weighted: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&u.values)
        .map(|(&r, v)| v.abs().powf(p.crit) * r.powf(-p.s))
        .collect();
    JParts {
        gradient: grid.integrate_volume(m, &grad),
        potential: grid.integrate_volume(m, &pot),
        weighted: grid.integrate_volume(m, &weighted),
    }
    .value(p.crit)
}

/// The parts of J for a radial function given with its derivative, by
/// adaptive quadrature. `scale` is the radius where u varies fastest;
/// `breaks` are known kinks of the integrands.
pub fn j_parts_with<U, DU>(family: &TestFamily, u: U, du: DU, scale: f64, breaks: &[f64]) -> Result<JParts>
where
    U: Fn(f64) -> f64,
    DU: Fn(f64) -> f64,
{
    let p = family.params();
    let m = &family.manifold;
    let len = m.injectivity_radius();
    let tol = Tolerance::relative(J_TOL);
    let gradient = integrate_from_zero(|r| du(r).powi(2) * m.area(r), len, scale, breaks, tol)?.value;
    let potential = integrate_from_zero(|r| family.a.value(r) * u(r).powi(2) * m.area(r), len, scale, breaks, tol)?.value;
    let weighted = integrate_from_zero(
        |r| u(r).abs().powf(p.crit) * r.powf(-p.s) * m.area(r),
        len,
        scale,
        breaks,
        tol,
    )?
    .value;
    Ok(JParts {
        gradient,
        potential,
        weighted,
    })
}

/// (sin x / x)^k − 1 without cancellation at small x.
fn sinc_pow_minus_one(k: f64, x: f64) -> f64 {
    let ln_sinc = if x < 0.1 {
        let x2 = x * x;
        -x2 * (1.0 / 6.0 + x2 * (1.0 / 180.0 + x2 * (1.0 / 2835.0 + x2 * (1.0 / 37800.0 + x2 / 467_775.0))))
    } else {
        (x.sin() / x).ln()
    };
    (k * ln_sinc).exp_m1()
}

/// K·J(u_ε) − 1 for n ≥ 4, free of cancellation.
pub fn j_u_eps_excess(family: &TestFamily, eps: f64) -> Result<f64> {
    let p = family.params();
    if p.n < 4 {
        return Err(Error::domain("u_ε has infinite-order cancellation only for n ≥ 4; use v_ε in dimension 3"));
    }
    let nf = p.nf();
    let m = &family.manifold;
    let rr = m.radius;
    let omega = p.omega();
    let b = bubble_integrals(&p)?;
    let tol = Tolerance::relative(J_TOL);
    let t_max = m.injectivity_radius() / eps;
    let breaks: Vec<f64> = [0.25, 0.5, 1.0, 2.0, 3.0].iter().map(|k| k * rr / eps).collect();
    let ds = |t: f64| sinc_pow_minus_one(nf - 1.0, eps * t / rr);

    let grad_in = integrate_from_zero(
        |t| phi_prime(&p, t).powi(2) * t.powf(nf - 1.0) * ds(t),
        t_max,
        1.0,
        &breaks,
        tol,
    )?
    .value;
    let grad_tail = integrate_log(
        |t| phi_prime(&p, t).powi(2) * t.powf(nf - 1.0),
        t_max,
        t_max * (40.0 / (nf - 2.0)).exp(),
        &[],
        tol,
    )?
    .value;
    let weighted_in = integrate_from_zero(
        |t| phi(&p, t).powf(p.crit) * t.powf(nf - 1.0 - p.s) * ds(t),
        t_max,
        1.0,
        &breaks,
        tol,
    )?
    .value;
    let weighted_tail = integrate_log(
        |t| phi(&p, t).powf(p.crit) * t.powf(nf - 1.0 - p.s),
        t_max,
        t_max * (40.0 / (nf - p.s)).exp(),
        &[],
        tol,
    )?
    .value;
    let potential = eps
        * eps
        * omega
        * integrate_from_zero(
            |t| family.a.value(eps * t) * phi(&p, t).powi(2) * t.powf(nf - 1.0) * (1.0 + ds(t)),
            t_max,
            1.0,
            &breaks,
            tol,
        )?
        .value;

    let d_num = omega * (grad_in - grad_tail) + potential;
    let d_den = omega * (weighted_in - weighted_tail);
    let excess = ((d_num / b.dirichlet).ln_1p() - (2.0 / p.crit) * (d_den / b.weighted_crit).ln_1p()).exp_m1();
    if !excess.is_finite() {
        return Err(Error::Quadrature(format!("non-finite K·J(u_ε) − 1 at ε = {eps}")));
    }
    Ok(excess)
}

/// J(v_ε) (n = 3) by direct quadrature.
pub fn j_v_eps(family: &TestFamily, green: &GreenDecomposition, eps: f64) -> Result<f64> {
    check_green(family, green)?;
    let rho = family.cutoff.rho;
    let parts = j_parts_with(
        family,
        |r| v_eps(family, green, eps, r).unwrap_or(f64::NAN),
        |r| v_eps_prime(family, green, eps, r).unwrap_or(f64::NAN),
        eps,
        &[rho, 2.0 * rho],
    )?;
    parts.value(family.params().crit)
}

/// One ε evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsSample {
    pub eps: f64,
    pub j: f64,
    /// K·J − 1
    pub excess: f64,
}

pub fn sample_u_eps(family: &TestFamily, eps: f64) -> Result<EpsSample> {
    let k = sharp_constant(&family.params())?;
    let excess = j_u_eps_excess(family, eps)?;
    Ok(EpsSample {
        eps,
        j: (1.0 + excess) / k,
        excess,
    })
}

pub fn sample_v_eps(family: &TestFamily, green: &GreenDecomposition, eps: f64) -> Result<EpsSample> {
    let k = sharp_constant(&family.params())?;
    let j = j_v_eps(family, green, eps)?;
    Ok(EpsSample {
        eps,
        j,
        excess: k * j - 1.0,
    })
}

/// An asymptotic fit of K·J − 1 over the ε list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    /// lim J, from a fit that also frees the constant term.
    pub leading: f64,
    /// Coefficient of the leading ε-power of `model` (for the mass
    /// expansion, B in K·J − 1 = −Bε).
    pub slope: f64,
    /// The model `slope` belongs to.
    pub model: FitModel,
    pub residual: f64,
    /// The model preferred by residual comparison.
    pub selected: FitModel,
    /// The model predicted from the dimension.
    pub dimension_model: FitModel,
    /// The predicted slope, when one is available.
    pub target: Option<f64>,
    pub rel_err: Option<f64>,
    pub alternatives: Vec<ModelFit>,
    pub samples: Vec<EpsSample>,
}

fn check_fit(fit: &ExpansionFit) -> Result<()> {
    if fit.residual > FIT_RESIDUAL_MAX || !fit.residual.is_finite() {
        return Err(Error::InconclusiveFit {
            model: fit.model.name().to_string(),
            residual: fit.residual,
            threshold: FIT_RESIDUAL_MAX,
            slope: fit.slope,
        });
    }
    Ok(())
}

fn assemble_fit(
    params: &BubbleParams,
    samples: Vec<EpsSample>,
    model: Option<FitModel>,
    slope_sign: f64,
    target: Option<f64>,
) -> Result<ExpansionFit> {
    if samples.len() < 6 {
        return Err(Error::FitRange(format!("{} ε samples are too few for a fit", samples.len())));
    }
    let eps: Vec<f64> = samples.iter().map(|s| s.eps).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.excess).collect();
    let (chosen, all) = select_model(&eps, &y)?;
    let reported = match model {
        Some(m) => all.iter().find(|f| f.model == m).expect("all models fitted").clone(),
        None => chosen.clone(),
    };
    // lim K·J from the same basis with a free constant
    let w = relative_weights(&y);
    let design = nalgebra::DMatrix::from_fn(eps.len(), 4, |i, j| {
        if j == 0 {
            1.0
        } else {
            reported.model.basis(eps[i])[j - 1]
        }
    });
    let free = crate::fit::weighted_least_squares(&design, &y, &w)?;
    let leading = (1.0 + free.coefficients[0]) / sharp_constant(params)?;
    let slope = slope_sign * reported.slope;
    let rel_err = target.map(|t| ((slope - t) / t).abs());
    let fit = ExpansionFit {
        leading,
        slope,
        model: reported.model,
        residual: reported.residual,
        selected: chosen.model,
        dimension_model: FitModel::for_dimension(params.n),
        target,
        rel_err,
        alternatives: all,
        samples,
    };
    check_fit(&fit)?;
    Ok(fit)
}

/// Predicted leading coefficient of K·J(u_ε) − 1: C₁(a(x₀) − c·Scal)
/// for n ≥ 5 (coefficient of ε²) and (ω₃/∫|∇Φ|²)(a(x₀) − Scal/6) for
/// n = 4 (coefficient of ε² ln(1/ε)).
pub fn high_dim_target(family: &TestFamily) -> Result<f64> {
    let p = family.params();
    let a0 = family.a.at_pole();
    let scal = family.manifold.scalar_curvature();
    match p.n {
        0..=3 => Err(Error::domain("the u_ε expansion applies for n ≥ 4")),
        4 => Ok(p.omega() / bubble_integrals(&p)?.dirichlet * (a0 - scal / 6.0)),
        _ => {
            let (c1, _) = c1_c2(&p)?;
            Ok(c1 * (a0 - curvature_threshold(&p) * scal))
        }
    }
}

pub fn sample_family_u_eps(family: &TestFamily) -> Result<Vec<EpsSample>> {
    family.eps_list.iter().map(|&e| sample_u_eps(family, e)).collect()
}

/// Fits K·J(u_ε) − 1 over the family's ε list (n ≥ 4).
pub fn fit_high_dim_expansion(family: &TestFamily) -> Result<ExpansionFit> {
    fit_high_dim_from_samples(family, sample_family_u_eps(family)?)
}

/// As [`fit_high_dim_expansion`] on precomputed samples; the reported
/// slope belongs to the model chosen by residual comparison.
pub fn fit_high_dim_from_samples(family: &TestFamily, samples: Vec<EpsSample>) -> Result<ExpansionFit> {
    let p = family.params();
    if p.n < 4 {
        return Err(Error::domain("the u_ε expansion applies for n ≥ 4"));
    }
    let decades = (family.eps_list[0] / family.eps_list[family.eps_list.len() - 1]).log10();
    if decades < 1.5 {
        return Err(Error::FitRange(format!("ε list spans {decades:.2} decades; need at least 1.5")));
    }
    assemble_fit(&p, samples, None, 1.0, Some(high_dim_target(family)?))
}

/// Mass coefficients of K·J(v_ε) − 1 = −Bε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassTargets {
    /// 2ω₂m/∫Φ^{2*}|X|^{−s}, the coefficient as usually stated.
    pub stated: f64,
    /// ω₂m/∫|∇Φ|², the coefficient the expansion actually produces:
    /// the numerator gains ω₂m·ε against ∫|∇Φ|² and the denominator
    /// 2ω₂m·ε against ∫Φ^{2*}|X|^{−s}, weighted by 2/2*.
    pub corrected: f64,
}

pub fn mass_targets(family: &TestFamily, green: &GreenDecomposition) -> Result<MassTargets> {
    check_green(family, green)?;
    let b = bubble_integrals(&family.params())?;
    let omega2 = sphere_volume(2)?;
    Ok(MassTargets {
        stated: 2.0 * omega2 * green.mass / b.weighted_crit,
        corrected: omega2 * green.mass / b.dirichlet,
    })
}

pub fn sample_family_v_eps(family: &TestFamily, green: &GreenDecomposition) -> Result<Vec<EpsSample>> {
    family.eps_list.iter().map(|&e| sample_v_eps(family, green, e)).collect()
}

/// Fits K·J(v_ε) − 1 = −Bε + … (n = 3); `slope` is B and `target` the
/// stated coefficient 2ω₂m/∫Φ^{2*}|X|^{−s}.
pub fn fit_mass_expansion(family: &TestFamily, green: &GreenDecomposition) -> Result<ExpansionFit> {
    fit_mass_from_samples(family, green, sample_family_v_eps(family, green)?)
}

pub fn fit_mass_from_samples(
    family: &TestFamily,
    green: &GreenDecomposition,
    samples: Vec<EpsSample>,
) -> Result<ExpansionFit> {
    let targets = mass_targets(family, green)?;
    if !green.mass.is_finite() {
        return Err(Error::domain("mass is not finite"));
    }
    assemble_fit(&family.params(), samples, Some(FitModel::Eps1), -1.0, Some(targets.stated))
}

/// The Eps1 fit of K·J(v_ε) − 1 as a bare [`ModelFit`], without the
/// residual gate (used for near-zero masses where only |B| matters).
pub fn mass_slope_unchecked(samples: &[EpsSample]) -> Result<f64> {
    let eps: Vec<f64> = samples.iter().map(|s| s.eps).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.excess).collect();
    let w = vec![1.0; y.len()];
    Ok(-fit_model(FitModel::Eps1, &eps, &y, &w)?.slope)
}
