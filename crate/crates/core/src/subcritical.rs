//! Minimization of the subcritical quotient
//! J_q(u) = ∫(|∇u|² + a u²) / (∫|u|^q d^{−s})^{2/q}, 2 < q ≤ 2*(s), over
//! radial functions, and the continuation q ↑ 2*(s).
//!
//! The discretization is P1 with lumped mass; the weight d^{−s} is
//! integrated exactly over each dual cell. The optimizer is a projected
//! gradient method on the constraint surface Σ W_i|u_i|^q = 1 whose
//! gradient is preconditioned by the (coercive) operator itself, so the
//! step τ = 1 is the classical normalized fixed-point iteration
//! u ← A⁻¹(W u^{q−1}) / ‖·‖ and Barzilai–Borwein steps accelerate it.

use serde::{Deserialize, Serialize};

use crate::bubble::{sharp_constant, BubbleParams};
use crate::error::{Error, Result};
use crate::fem::RadialFem;
use crate::geometry::{ModelManifold, RadialFunction, RadialGrid};
use crate::green::COERCIVITY_THRESHOLD;
use crate::potential::Potential;
use crate::quadrature::csum;
use crate::tridiag::SymTridiagonal;

pub const EL_TOL: f64 = 1e-8;
pub const MAX_ITERS: usize = 100_000;
/// Consecutive accepted steps with rising energy that count as divergence.
pub const DIVERGENCE_WINDOW: usize = 100;
/// Relative half-width of the "at threshold" band around K⁻¹.
pub const THRESHOLD_BAND: f64 = 1e-4;
pub const DEFAULT_GRID_NODES: usize = 512;

#[derive(Debug, Clone)]
pub struct SubcriticalProblem {
    pub manifold: ModelManifold,
    pub s: f64,
    pub a: Potential,
    pub q: f64,
    pub grid: RadialGrid,
    fem: RadialFem,
    a_nodes: Vec<f64>,
    op: SymTridiagonal,
    /// W_i = ∫_{cell i} d^{−s} dv
    weights: Vec<f64>,
    crit: f64,
    coercivity_margin: f64,
}

impl SubcriticalProblem {
    pub fn new(manifold: ModelManifold, s: f64, a: Potential, q: f64, nodes: usize) -> Result<Self> {
        let params = BubbleParams::new(manifold.n, s)?;
        a.validate()?;
        if !(q > 2.0 && q <= params.crit + 1e-12) {
            return Err(Error::domain(format!(
                "q must lie in (2, 2*(s)] = (2, {}], got {q}",
                params.crit
            )));
        }
        let grid = RadialGrid::new(&manifold, nodes)?;
        let fem = RadialFem::new(&manifold, &grid)?;
        let a_nodes = fem.potential_values(&a);
        let coercivity_margin = fem.coercivity_margin(&a_nodes)?;
        if !(coercivity_margin > COERCIVITY_THRESHOLD) {
            return Err(Error::Coercivity {
                margin: coercivity_margin,
            });
        }
        let op = fem.operator(&a_nodes);
        let weights = fem.weighted_mass(s)?;
        Ok(Self {
            manifold,
            s,
            a,
            q: q.min(params.crit),
            grid,
            fem,
            a_nodes,
            op,
            weights,
            crit: params.crit,
            coercivity_margin,
        })
    }

    /// The same discretization at another exponent.
    pub fn with_q(&self, q: f64) -> Result<Self> {
        if !(q > 2.0 && q <= self.crit + 1e-12) {
            return Err(Error::domain(format!("q must lie in (2, {}], got {q}", self.crit)));
        }
        Ok(Self {
            q: q.min(self.crit),
            ..self.clone()
        })
    }

    pub fn critical_exponent(&self) -> f64 {
        self.crit
    }

    pub fn is_critical(&self) -> bool {
        self.q == self.crit
    }

    pub fn coercivity_margin(&self) -> f64 {
        self.coercivity_margin
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// A u in difference form: Σ_e k_e (u_i − u_j) + a_i M_i u_i. Forming the
    /// differences first keeps the relative accuracy near the pole, where
    /// k_e is huge and the differences tiny.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let mut out: Vec<f64> = (0..n).map(|i| self.a_nodes[i] * self.fem.mass[i] * u[i]).collect();
        for (e, &k) in self.fem.stiffness.iter().enumerate() {
            let flux = k * (u[e] - u[e + 1]);
            out[e] += flux;
            out[e + 1] -= flux;
        }
        out
    }

    /// ∫(|∇u|² + a u²) in the discrete form.
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.fem.energy(&self.a_nodes, u)
    }

    /// Σ W_i |u_i|^q
    pub fn constraint(&self, u: &[f64]) -> f64 {
        csum(u.iter().zip(&self.weights).map(|(v, w)| w * v.abs().powf(self.q)))
    }

    /// J_q(u)
    pub fn quotient(&self, u: &[f64]) -> Result<f64> {
        let c = self.constraint(u);
        if !(c > 0.0) {
            return Err(Error::domain("J_q is undefined for u ≡ 0"));
        }
        Ok(self.energy(u) / c.powf(2.0 / self.q))
    }

    /// ∇J_q(u) (Euclidean gradient of the discrete quotient).
    pub fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        let c = self.constraint(u);
        if !(c > 0.0) {
            return Err(Error::domain("J_q is undefined for u ≡ 0"));
        }
        let e = self.energy(u);
        let au = self.apply(u);
        let scale = 2.0 / c.powf(2.0 / self.q);
        Ok(au
            .iter()
            .zip(u)
            .zip(&self.weights)
            .map(|((x, v), w)| scale * (x - e / c * w * v.abs().powf(self.q - 2.0) * v))
            .collect())
    }

    /// u scaled onto Σ W_i |u_i|^q = 1.
    pub fn normalize(&self, u: &[f64]) -> Result<Vec<f64>> {
        let c = self.constraint(u);
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain("cannot normalize u ≡ 0"));
        }
        let f = c.powf(-1.0 / self.q);
        Ok(u.iter().map(|v| v * f).collect())
    }

    /// Φ(r/ε) (the profile of u_ε) sampled on the grid and normalized.
    pub fn bubble_init(&self, eps: f64) -> Result<Vec<f64>> {
        let p = BubbleParams::new(self.manifold.n, self.s)?;
        let u: Vec<f64> = self
            .grid
            .nodes
            .iter()
            .map(|&r| crate::bubble::phi(&p, r / eps))
            .collect();
        self.normalize(&u)
    }
}

/// sup_i |(Au)_i − λW_i u_i^{q−1}| / M_i, relative to sup_i λW_i|u_i|^{q−1}/M_i.
pub fn el_residual(u: &[f64], lambda: f64, problem: &SubcriticalProblem) -> f64 {
    let au = problem.apply(u);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..u.len() {
        let m = problem.fem.mass[i];
        let rhs = lambda * problem.weights[i] * u[i].abs().powf(problem.q - 2.0) * u[i] / m;
        worst = worst.max((au[i] / m - rhs).abs());
        scale = scale.max(rhs.abs());
    }
    if scale > 0.0 {
        worst / scale
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self {
            tol: EL_TOL,
            max_iters: MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerResult {
    pub q: f64,
    pub u: RadialFunction,
    pub lambda: f64,
    pub el_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Σ W_i u_i^q at return.
    pub normalization: f64,
    /// λ after every accepted step.
    pub trace: Vec<f64>,
}

/// Preconditioned projected gradient descent with Barzilai–Borwein steps
/// and Armijo backtracking; u ← |u| after every step.
pub fn minimize_jq(problem: &SubcriticalProblem, init: &RadialFunction) -> Result<MinimizerResult> {
    minimize_jq_with(problem, init, MinimizerOptions::default())
}

pub fn minimize_jq_with(
    problem: &SubcriticalProblem,
    init: &RadialFunction,
    opts: MinimizerOptions,
) -> Result<MinimizerResult> {
    if init.len() != problem.grid.len() {
        return Err(Error::domain("initial guess and grid sizes differ"));
    }
    if init.values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::domain("initial guess must be finite and nonnegative"));
    }
    let q = problem.q;
    // an input already on the constraint surface is taken as is, so that a
    // converged result is an exact fixed point
    let mut u = if (problem.constraint(&init.values) - 1.0).abs() <= 1e-13 {
        init.values.clone()
    } else {
        problem.normalize(&init.values)?
    };
    let mut lambda = problem.energy(&u);
    let mut trace = vec![lambda];

    let direction = |u: &[f64], lambda: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let au = problem.apply(u);
        let g: Vec<f64> = au
            .iter()
            .zip(u)
            .zip(&problem.weights)
            .map(|((x, v), w)| x - lambda * w * v.powf(q - 1.0))
            .collect();
        let d = problem.op.solve(&g)?;
        Ok((g, d))
    };

    let (mut g, mut d) = direction(&u, lambda)?;
    let mut tau = 1.0;
    let mut rising = 0;
    let mut iterations = 0;
    let mut residual = el_residual(&u, lambda, problem);
    let mut converged = residual <= opts.tol;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let slope = csum(g.iter().zip(&d).map(|(x, y)| x * y)).max(0.0);
        // rounding slack: energies agree to a few ulps near the minimum
        let slack = 16.0 * f64::EPSILON * lambda.abs();
        let mut step = tau;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(x, y)| (x - step * y).abs()).collect();
            if let Ok(trial) = problem.normalize(&trial) {
                let e = problem.energy(&trial);
                if e <= lambda - 2e-4 * step * slope + slack {
                    accepted = Some((trial, e));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, e)) = accepted else {
            // no descent left above rounding
            break;
        };
        if e > lambda {
            rising += 1;
            if rising >= DIVERGENCE_WINDOW {
                return Err(Error::Optimizer {
                    reason: format!("energy rose over {DIVERGENCE_WINDOW} consecutive accepted steps"),
                    iterations,
                    trace,
                });
            }
        } else {
            rising = 0;
        }
        let (g_next, d_next) = direction(&next, e)?;
        // BB1 step in the operator metric: ⟨s, A s⟩ / ⟨s, g' − g⟩
        let s: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let num = csum(s.iter().zip(problem.apply(&s)).map(|(a, b)| a * b));
        let den = csum(s.iter().zip(g_next.iter().zip(&g)).map(|(a, (x, y))| a * (x - y)));
        tau = if den > 0.0 && num > 0.0 { (num / den).clamp(1e-3, 1e3) } else { 1.0 };

        u = next;
        lambda = e;
        g = g_next;
        d = d_next;
        trace.push(lambda);
        residual = el_residual(&u, lambda, problem);
        converged = residual <= opts.tol;
        if !lambda.is_finite() {
            return Err(Error::Optimizer {
                reason: "non-finite energy".into(),
                iterations,
                trace,
            });
        }
    }
    Ok(MinimizerResult {
        q,
        u: RadialFunction::from_values(&problem.grid, u.clone())?,
        lambda,
        el_residual: residual,
        iterations,
        converged,
        normalization: problem.constraint(&u),
        trace,
    })
}

/// Lowest μ with A v = μ W v, the q = 2 limit of λ_q.
pub fn weighted_eigenvalue(problem: &SubcriticalProblem) -> Result<f64> {
    let mut v = vec![1.0; problem.grid.len()];
    let mut mu = f64::INFINITY;
    for _ in 0..10_000 {
        let wv: Vec<f64> = v.iter().zip(&problem.weights).map(|(x, w)| x * w).collect();
        let next = problem.op.solve(&wv)?;
        let norm = next.iter().map(|x| x.abs()).fold(0.0, f64::max);
        v = next.iter().map(|x| x / norm).collect();
        let quad = csum(v.iter().zip(&problem.weights).map(|(x, w)| w * x * x));
        let m = problem.energy(&v) / quad;
        let done = (m - mu).abs() <= 1e-14 * m.abs();
        mu = m;
        if done {
            return Ok(mu);
        }
    }
    Err(Error::Resolution("weighted inverse iteration did not settle".into()))
}

/// Default ladder 2.2, 2.5, 2.8, … (steps of 0.3) below 2* − 0.05, then
/// 2* − 0.05 and 2*.
pub fn default_q_ladder(crit: f64) -> Vec<f64> {
    let mut ladder = vec![2.2];
    let mut q = 2.5;
    while q < crit - 0.05 - 1e-12 {
        ladder.push(q);
        q += 0.3;
    }
    if crit - 0.05 > 2.2 {
        ladder.push(crit - 0.05);
    }
    ladder.push(crit);
    ladder
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub results: Vec<MinimizerResult>,
    /// Index of the first rung that did not converge, if any.
    pub failure: Option<usize>,
    /// |λ_{k+1} − λ_k| along the ladder.
    pub increments: Vec<f64>,
    /// Whether the last three increments decrease.
    pub cauchy_tail: bool,
}

/// Runs the ladder, warm-starting each rung from the previous minimizer.
pub fn continuation(template: &SubcriticalProblem, ladder: &[f64], init: &RadialFunction) -> Result<Continuation> {
    continuation_with(template, ladder, init, MinimizerOptions::default())
}

pub fn continuation_with(
    template: &SubcriticalProblem,
    ladder: &[f64],
    init: &RadialFunction,
    opts: MinimizerOptions,
) -> Result<Continuation> {
    if ladder.is_empty() || !ladder.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::domain("q ladder must be non-empty and increasing"));
    }
    let mut results: Vec<MinimizerResult> = Vec::with_capacity(ladder.len());
    let mut failure = None;
    let mut start = init.clone();
    for (k, &q) in ladder.iter().enumerate() {
        let problem = template.with_q(q)?;
        let res = minimize_jq_with(&problem, &start, opts)?;
        start = res.u.clone();
        let ok = res.converged;
        results.push(res);
        if !ok {
            failure = Some(k);
            break;
        }
    }
    let increments: Vec<f64> = results.windows(2).map(|w| (w[1].lambda - w[0].lambda).abs()).collect();
    let cauchy_tail = increments.len() >= 3 && {
        let tail = &increments[increments.len() - 3..];
        tail[0] > tail[1] && tail[1] > tail[2]
    };
    Ok(Continuation {
        results,
        failure,
        increments,
        cauchy_tail,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    /// λ < K⁻¹ beyond the band: the infimum is achieved.
    BelowThreshold { margin: f64 },
    /// |λ − K⁻¹| within the band: no conclusion.
    AtThreshold { margin: f64 },
    /// λ > K⁻¹ beyond the band. The true infimum never exceeds K⁻¹, so this
    /// signals an under-resolved computation.
    Above { margin: f64, under_resolved: bool },
}

impl Verdict {
    /// K⁻¹ − λ
    pub fn margin(&self) -> f64 {
        match *self {
            Verdict::BelowThreshold { margin } | Verdict::AtThreshold { margin } | Verdict::Above { margin, .. } => margin,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::BelowThreshold { .. } => "BELOW_THRESHOLD",
            Verdict::AtThreshold { .. } => "AT_THRESHOLD",
            Verdict::Above { .. } => "ABOVE",
        }
    }
}

/// Compares a converged λ with the threshold K(n,s)⁻¹.
pub fn threshold_verdict(lambda: f64, params: &BubbleParams) -> Result<Verdict> {
    let kinv = 1.0 / sharp_constant(params)?;
    let margin = kinv - lambda;
    Ok(if margin.abs() <= THRESHOLD_BAND * kinv {
        Verdict::AtThreshold { margin }
    } else if margin > 0.0 {
        Verdict::BelowThreshold { margin }
    } else {
        Verdict::Above {
            margin,
            under_resolved: true,
        }
    })
}

pub fn existence_verdict(result: &MinimizerResult, params: &BubbleParams) -> Result<Verdict> {
    if !result.converged {
        return Err(Error::domain("verdict needs a converged minimizer"));
    }
    threshold_verdict(result.lambda, params)
}

/// Directional derivatives of J_q along the given directions, projected
/// onto the tangent space of the constraint, compared with central
/// differences. Returns the largest relative discrepancy.
pub fn gradient_check(problem: &SubcriticalProblem, u: &[f64], directions: &[Vec<f64>]) -> Result<f64> {
    let u = problem.normalize(u)?;
    let grad = problem.gradient(&u)?;
    // ∇C = q W |u|^{q−2} u; tangent projection v − (∇C·v / ∇C·u) u
    let dc: Vec<f64> = u
        .iter()
        .zip(&problem.weights)
        .map(|(v, w)| problem.q * w * v.abs().powf(problem.q - 2.0) * v)
        .collect();
    let dcu = csum(dc.iter().zip(&u).map(|(a, b)| a * b));
    let unorm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for v in directions {
        if v.len() != u.len() {
            return Err(Error::domain("direction and grid sizes differ"));
        }
        let k = csum(dc.iter().zip(v).map(|(a, b)| a * b)) / dcu;
        let t: Vec<f64> = v.iter().zip(&u).map(|(x, y)| x - k * y).collect();
        let tnorm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        // keep every |u_i + h t_i| within 1% of |u_i|: |u|^q is only
        // finitely smooth at 0, so the far field of a concentrated u
        // must not be pushed towards it
        let local = u
            .iter()
            .zip(&t)
            .filter(|(_, y)| **y != 0.0)
            .map(|(x, y)| (x / y).abs())
            .fold(f64::INFINITY, f64::min);
        let h = (1e-4 * unorm / tnorm).min(1e-2 * local);
        if !(h > 0.0) {
            return Err(Error::domain("gradient check needs u without zeros"));
        }
        let at = |step: f64| -> Result<f64> {
            let w: Vec<f64> = u.iter().zip(&t).map(|(x, y)| x + step * y).collect();
            problem.quotient(&problem.normalize(&w)?)
        };
        let central = |h: f64| -> Result<f64> { Ok((at(h)? - at(-h)?) / (2.0 * h)) };
        let fd = (4.0 * central(0.5 * h)? - central(h)?) / 3.0;
        let an = csum(grad.iter().zip(&t).map(|(a, b)| a * b));
        worst = worst.max((fd - an).abs() / an.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}
