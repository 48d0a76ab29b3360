//! Green's function of Δ_g + a with pole x₀ on S³(R), split as
//! ω₂G = η/d + β with β bounded, and the mass m(x₀) = β(x₀).
//!
//! The solver does not discretize β directly: the quintic cutoff is only
//! C², and the kinks it puts into β'' spoil grid extrapolation. Instead it
//! splits off S(r) = (π − u)/(πR sin u), u = r/R, the Green's function of
//! Δ + 1/R² (singular only at the pole, where S = 1/d − 1/(πR) + O(d)),
//! and solves (Δ + a)γ = −(a − 1/R²)S for the smooth remainder
//! γ = ω₂G − S. β = γ + S − η/d is then reassembled exactly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::RadialFem;
use crate::geometry::{radial_derivatives_with, ModelManifold, RadialGrid};
use crate::potential::{Cutoff, Potential};
use crate::quadrature::{csum, integrate, Tolerance};
use crate::special::sphere_volume;

/// Cutoff radius as a fraction of R.
pub const DEFAULT_RHO_FRACTION: f64 = 0.4;
pub const DEFAULT_GREEN_NODES: usize = 1024;
pub const COERCIVITY_THRESHOLD: f64 = 1e-8;
pub const ODE_RESIDUAL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenOptions {
    /// Nodes of the coarse grid; the refined grid has three times as many.
    pub nodes: usize,
    pub rho_fraction: f64,
}

impl Default for GreenOptions {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_GREEN_NODES,
            rho_fraction: DEFAULT_RHO_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenDecomposition {
    pub manifold: ModelManifold,
    pub a: Potential,
    pub cutoff: Cutoff,
    pub nodes: Vec<f64>,
    /// G at the nodes
    pub g: Vec<f64>,
    /// β = ω₂G − η/d at the nodes
    pub beta: Vec<f64>,
    pub beta_prime: Vec<f64>,
    /// γ = ω₂G − S at the nodes (smooth away from the pole)
    pub gamma: Vec<f64>,
    pub gamma_prime: Vec<f64>,
    /// β(x₀), extrapolated from the smallest nodes
    pub mass: f64,
    /// fitted β(r) ≈ mass + mass_slope·r^mass_exponent near the pole
    pub mass_slope: f64,
    pub mass_exponent: f64,
    /// relative sup-norm of Δβ + aβ − f away from the pole
    pub ode_residual: f64,
    /// smallest discrete Rayleigh quotient of Δ + a
    pub coercivity_margin: f64,
    /// max |β_3N − β_N| before extrapolation, an error indicator
    pub richardson_change: f64,
}

/// 1/sin u − 1/u, accurate for small u.
fn csc_minus_inverse(u: f64) -> f64 {
    if u.abs() < 0.1 {
        let u2 = u * u;
        u * (1.0 / 6.0 + u2 * (7.0 / 360.0 + u2 * (31.0 / 15120.0 + u2 * 127.0 / 604_800.0)))
    } else {
        1.0 / u.sin() - 1.0 / u
    }
}

/// S(r) = (π − u)/(πR sin u), the splitting function.
fn split_s(m: &ModelManifold, r: f64) -> f64 {
    let u = r / m.radius;
    (PI - u) / (PI * m.radius * u.sin())
}

/// S'(r)
fn split_s_prime(m: &ModelManifold, r: f64) -> f64 {
    let rr = m.radius;
    let u = r / rr;
    let (sn, cs) = u.sin_cos();
    (-sn - (PI - u) * cs) / (PI * rr * rr * sn * sn)
}

/// (S − η/r, (S − η/r)') without cancellation near the pole.
fn split_minus_cutoff(m: &ModelManifold, cutoff: &Cutoff, r: f64) -> (f64, f64) {
    let rr = m.radius;
    let u = r / rr;
    let (eta, deta, _) = cutoff.eval(r);
    if eta == 1.0 {
        // S − 1/r = (1/R)[(1/sin u − 1/u) − u/(π sin u)]
        let value = (csc_minus_inverse(u) - u / (PI * u.sin())) / rr;
        let deriv = split_s_prime(m, r) + 1.0 / (r * r);
        return (value, deriv);
    }
    (split_s(m, r) - eta / r, split_s_prime(m, r) - deta / r + eta / (r * r))
}

fn check_manifold(m: &ModelManifold) -> Result<()> {
    m.validate()?;
    if m.n != 3 {
        return Err(Error::domain(format!(
            "the Green's function mass is computed in dimension 3 only, got n = {}",
            m.n
        )));
    }
    Ok(())
}

/// Solves the discrete γ-equation on one grid. Returns (γ, coercivity margin).
fn solve_gamma(m: &ModelManifold, grid: &RadialGrid, a: &Potential) -> Result<(Vec<f64>, f64)> {
    let fem = RadialFem::new(m, grid)?;
    let av = fem.potential_values(a);
    let margin = fem.coercivity_margin(&av)?;
    if !(margin > COERCIVITY_THRESHOLD) {
        return Err(Error::Coercivity { margin });
    }
    let shift = 1.0 / (m.radius * m.radius);
    // S·|S_r| = 4R(π − u) sin u is smooth, so plain per-cell quadrature
    // suffices; the absolute floor covers cells where a − 1/R² changes sign
    let rhs = fem
        .cells
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let scale = 4.0 * PI * m.radius * (a.value(mid) - shift).abs().max(shift);
            let tol = Tolerance {
                abs: 1e-15 * (w[1] - w[0]) * scale,
                ..Tolerance::relative(1e-13)
            };
            integrate(
                |r| {
                    let u = r / m.radius;
                    -(a.value(r) - shift) * 4.0 * m.radius * (PI - u) * u.sin()
                },
                w[0],
                w[1],
                tol,
            )
            .map(|e| e.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let gamma = fem.operator(&av).solve(&rhs)?;
    Ok((gamma, margin))
}

/// Fits β(r) ≈ m + c·r^α on the first `count` nodes, α ∈ (0, 1].
fn extrapolate_mass(nodes: &[f64], beta: &[f64], count: usize) -> (f64, f64, f64) {
    let fit = |alpha: f64| -> (f64, f64, f64) {
        let xs: Vec<f64> = nodes[..count].iter().map(|r| r.powf(alpha)).collect();
        let ys = &beta[..count];
        let k = count as f64;
        let mx = xs.iter().sum::<f64>() / k;
        let my = ys.iter().sum::<f64>() / k;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let c = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let m = my - c * mx;
        let res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - m - c * x).powi(2)).sum();
        (m, c, res)
    };
    // coarse scan, then golden-section refinement around the best α
    let mut best = (1.0, fit(1.0));
    for k in 1..=100 {
        let alpha = k as f64 / 100.0;
        let f = fit(alpha);
        if f.2 < best.1 .2 {
            best = (alpha, f);
        }
    }
    let (mut lo, mut hi) = ((best.0 - 0.01f64).max(1e-3), (best.0 + 0.01f64).min(1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if fit(x1).2 < fit(x2).2 {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let alpha_refined = 0.5 * (lo + hi);
    let refined = fit(alpha_refined);
    let (alpha, (m, c, _)) = if refined.2 <= best.1 .2 { (alpha_refined, refined) } else { best };
    (m, c, alpha)
}

pub fn solve_green(manifold: &ModelManifold, a: &Potential) -> Result<GreenDecomposition> {
    solve_green_with(manifold, a, GreenOptions::default())
}

pub fn solve_green_with(manifold: &ModelManifold, a: &Potential, opts: GreenOptions) -> Result<GreenDecomposition> {
    check_manifold(manifold)?;
    a.validate()?;
    let cutoff = Cutoff::new(opts.rho_fraction * manifold.radius)?;
    if 2.0 * cutoff.rho >= manifold.injectivity_radius() {
        return Err(Error::domain("cutoff support must stay inside the injectivity radius"));
    }
    let coarse = RadialGrid::new(manifold, opts.nodes)?;
    let fine = RadialGrid::new(manifold, 3 * opts.nodes)?;
    let (g_coarse, margin) = solve_gamma(manifold, &coarse, a)?;
    let (g_fine, _) = solve_gamma(manifold, &fine, a)?;
    // second-order error on nested grids: γ ≈ (9γ_3N − γ_N)/8
    let mut richardson_change: f64 = 0.0;
    let gamma: Vec<f64> = g_coarse
        .iter()
        .enumerate()
        .map(|(i, &gc)| {
            let gf = g_fine[RadialGrid::refined_index(i)];
            richardson_change = richardson_change.max((gf - gc).abs());
            (9.0 * gf - gc) / 8.0
        })
        .collect();
    let (d1, d2) = radial_derivatives_with(&coarse, &gamma, false);

    // residual of (Δ + a)(ω₂G) = (Δ + a)γ + (a − 1/R²)S away from both
    // coordinate singularities, relative to the size of aω₂G there
    let shift = 1.0 / (manifold.radius * manifold.radius);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (i, &r) in coarse.nodes.iter().enumerate() {
        if r < 0.1 * manifold.radius || r > (PI - 0.1) * manifold.radius {
            continue;
        }
        let sv = split_s(manifold, r);
        let av = a.value(r);
        let res = -d2[i] - manifold.drift(r) * d1[i] + av * gamma[i] + (av - shift) * sv;
        worst = worst.max(res.abs());
        scale = scale.max((av * (gamma[i] + sv)).abs());
    }
    let ode_residual = worst / scale.max(f64::MIN_POSITIVE);
    if ode_residual > ODE_RESIDUAL_TOL {
        return Err(Error::Resolution(format!(
            "Green's function ODE residual {ode_residual:.3e} above {ODE_RESIDUAL_TOL:.0e}; increase the grid size"
        )));
    }

    let mut beta = Vec::with_capacity(gamma.len());
    let mut beta_prime = Vec::with_capacity(gamma.len());
    for (i, &r) in coarse.nodes.iter().enumerate() {
        let (v, dv) = split_minus_cutoff(manifold, &cutoff, r);
        beta.push(gamma[i] + v);
        beta_prime.push(d1[i] + dv);
    }
    let (mass, mass_slope, mass_exponent) = extrapolate_mass(&coarse.nodes, &beta, 5);
    let omega2 = sphere_volume(2)?;
    let g = coarse
        .nodes
        .iter()
        .zip(&gamma)
        .map(|(&r, gm)| (split_s(manifold, r) + gm) / omega2)
        .collect();
    Ok(GreenDecomposition {
        manifold: *manifold,
        a: a.clone(),
        cutoff,
        nodes: coarse.nodes,
        g,
        beta,
        beta_prime,
        gamma,
        gamma_prime: d1,
        mass,
        mass_slope,
        mass_exponent,
        ode_residual,
        coercivity_margin: margin,
        richardson_change,
    })
}

impl GreenDecomposition {
    /// (β(r), β'(r)). Above the first node γ is interpolated by cubic
    /// Hermite (even reflection beyond the last node) and the analytic
    /// S − η/r added; below it the fitted pole model is used.
    pub fn beta_at(&self, r: f64) -> (f64, f64) {
        let x = &self.nodes;
        let n = x.len();
        if r <= x[0] {
            if r <= 0.0 {
                return (self.mass, 0.0);
            }
            let alpha = self.mass_exponent;
            return (
                self.mass + self.mass_slope * r.powf(alpha),
                self.mass_slope * alpha * r.powf(alpha - 1.0),
            );
        }
        let (gv, gd) = if r >= x[n - 1] {
            let len = self.manifold.injectivity_radius();
            let mirror = 2.0 * len - x[n - 1];
            let (b, d) = (self.gamma[n - 1], self.gamma_prime[n - 1]);
            hermite(x[n - 1], mirror, b, b, d, -d, r.min(len))
        } else {
            let k = x.partition_point(|&v| v <= r) - 1;
            hermite(
                x[k],
                x[k + 1],
                self.gamma[k],
                self.gamma[k + 1],
                self.gamma_prime[k],
                self.gamma_prime[k + 1],
                r,
            )
        };
        let (sv, sd) = split_minus_cutoff(&self.manifold, &self.cutoff, r.min(self.manifold.injectivity_radius() * (1.0 - 1e-12)));
        (gv + sv, gd + sd)
    }

    /// G at an arbitrary radius.
    pub fn g_at(&self, r: f64) -> f64 {
        let omega2 = 4.0 * PI;
        (self.cutoff.value(r) / r + self.beta_at(r).0) / omega2
    }

    /// max over the smallest decade of nodes of |r·ω₂·G(r) − 1| / r.
    pub fn dirac_constant(&self) -> f64 {
        let r0 = self.nodes[0];
        let omega2 = 4.0 * PI;
        self.nodes
            .iter()
            .zip(&self.g)
            .take_while(|(&r, _)| r <= 10.0 * r0)
            .map(|(&r, g)| (r * omega2 * g - 1.0).abs() / r)
            .fold(0.0, f64::max)
    }

    pub fn min_g(&self) -> f64 {
        self.g.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
    let dh00 = 6.0 * t2 - 6.0 * t;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = -6.0 * t2 + 6.0 * t;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let deriv = (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1;
    (value, deriv)
}

/// ω₂G for constant a on S³(R), in closed form: with u = r/R and
/// k² = 1 − aR², ω₂G = sin(k(π−u)) / (R sin(kπ) sin u) (hyperbolic
/// functions when k² < 0). Valid while sin(kπ) ≠ 0, i.e. for a > 0.
pub fn closed_form_omega2_green(radius: f64, a: f64, r: f64) -> f64 {
    let u = r / radius;
    let k2 = 1.0 - a * radius * radius;
    let ratio = if k2 > 1e-14 {
        let k = k2.sqrt();
        (k * (PI - u)).sin() / (k * PI).sin()
    } else if k2 < -1e-14 {
        let k = (-k2).sqrt();
        (k * (PI - u)).sinh() / (k * PI).sinh()
    } else {
        (PI - u) / PI
    };
    ratio / (radius * u.sin())
}

/// The mass for constant a on S³(R): −(k/R)·cot(kπ), k = √(1 − aR²)
/// (−(κ/R)·coth(κπ) with κ = √(aR² − 1) above 1/R²).
pub fn closed_form_mass(radius: f64, a: f64) -> f64 {
    let k2 = 1.0 - a * radius * radius;
    if k2 > 1e-14 {
        let k = k2.sqrt();
        -k / (radius * (k * PI).tan())
    } else if k2 < -1e-14 {
        let k = (-k2).sqrt();
        -k / (radius * (k * PI).tanh())
    } else {
        -1.0 / (PI * radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassComparison {
    pub mass: f64,
    pub mass_prime: f64,
    /// min over nodes of β − β′
    pub min_gap: f64,
    /// ω₂∫G(a′ − a)G′ dv, which equals mass − mass′
    pub representation_gap: f64,
}

/// Compares the regular parts for two potentials a ≤ a′. A pointwise gap
/// below −1e−6 is reported as a property violation.
pub fn mass_comparison(manifold: &ModelManifold, a: &Potential, a_prime: &Potential) -> Result<MassComparison> {
    mass_comparison_with(manifold, a, a_prime, GreenOptions::default())
}

pub fn mass_comparison_with(
    manifold: &ModelManifold,
    a: &Potential,
    a_prime: &Potential,
    opts: GreenOptions,
) -> Result<MassComparison> {
    check_manifold(manifold)?;
    let grid = RadialGrid::new(manifold, opts.nodes)?;
    if grid.nodes.iter().any(|&r| a.value(r) > a_prime.value(r) + 1e-15) {
        return Err(Error::domain("mass comparison needs a <= a' pointwise"));
    }
    let g1 = solve_green_with(manifold, a, opts)?;
    let g2 = solve_green_with(manifold, a_prime, opts)?;
    let min_gap = g1
        .beta
        .iter()
        .zip(&g2.beta)
        .map(|(x, y)| x - y)
        .fold(f64::INFINITY, f64::min);
    let omega2 = sphere_volume(2)?;
    let representation_gap = omega2
        * csum(grid.nodes.iter().enumerate().map(|(i, &r)| {
            grid.quad_weights[i] * manifold.area(r) * g1.g[i] * (a_prime.value(r) - a.value(r)) * g2.g[i]
        }));
    if min_gap < -1e-6 {
        return Err(Error::PropertyViolation(format!(
            "β for the smaller potential falls below β′ by {:.3e}",
            -min_gap
        )));
    }
    Ok(MassComparison {
        mass: g1.mass,
        mass_prime: g2.mass,
        min_gap,
        representation_gap,
    })
}
