//! Round spheres Sⁿ(R) seen from a pole: geodesic radius r ∈ [0, πR],
//! volume element, scalar curvature and the radial Laplace–Beltrami operator
//! with the positive sign convention Δ = −div∇.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::sphere_volume;

pub const MIN_GRID_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    #[serde(alias = "round_sphere")]
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelManifold {
    pub kind: ManifoldKind,
    pub n: u32,
    pub radius: f64,
}

impl ModelManifold {
    pub fn sphere(n: u32, radius: f64) -> Result<Self> {
        let m = Self {
            kind: ManifoldKind::Sphere,
            n,
            radius,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::domain(format!("manifold dimension must be >= 3, got {}", self.n)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::domain(format!("sphere radius must be positive, got {}", self.radius)));
        }
        Ok(())
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Distance from the pole to the antipode.
    pub fn injectivity_radius(&self) -> f64 {
        PI * self.radius
    }

    pub fn scalar_curvature(&self) -> f64 {
        self.nf() * (self.nf() - 1.0) / (self.radius * self.radius)
    }

    pub fn total_volume(&self) -> f64 {
        sphere_volume(self.n as i64).expect("n >= 3") * self.radius.powi(self.n as i32)
    }

    /// Area of the geodesic sphere of radius r, without range checks.
    pub fn area(&self, r: f64) -> f64 {
        let rr = self.radius;
        sphere_volume(self.n as i64 - 1).expect("n >= 3") * (rr * (r / rr).sin()).powi(self.n as i32 - 1)
    }

    /// ω_{n−1} R^{n−1} sin^{n−1}(r/R), so ∫_M f dv_g = ∫₀^{πR} f(r) volume_element(r) dr.
    pub fn volume_element(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r < self.injectivity_radius()) {
            return Err(Error::domain(format!(
                "radius {r} outside (0, {})",
                self.injectivity_radius()
            )));
        }
        Ok(self.area(r))
    }

    /// (n−1) cot(r/R)/R, the mean curvature of geodesic spheres.
    pub fn drift(&self, r: f64) -> f64 {
        (self.nf() - 1.0) / (self.radius * (r / self.radius).tan())
    }

    /// (sin(r/R)/(r/R))^{n−1} − 1, the radial √det g − 1 in normal coordinates.
    pub fn sqrt_det_minus_one(&self, r: f64) -> f64 {
        let y = r / self.radius;
        if y == 0.0 {
            return 0.0;
        }
        ((self.nf() - 1.0) * (y.sin() / y).ln()).exp_m1()
    }
}

/// Chebyshev nodes in r: r_k = πR(1 − cos θ_k)/2 with θ_k = (k − ½)π/N,
/// k = 1..N, so neither pole is a node and the first node sits at
/// ≈ π³R/(16N²). The weights are Fejér's first rule, spectrally accurate
/// for smooth radial integrands. Grids with N and 3N nodes are nested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub nodes: Vec<f64>,
    pub quad_weights: Vec<f64>,
    /// πR, the far end of the grid.
    pub length: f64,
}

impl RadialGrid {
    pub fn new(m: &ModelManifold, count: usize) -> Result<Self> {
        m.validate()?;
        if count < MIN_GRID_NODES {
            return Err(Error::Resolution(format!(
                "grid needs at least {MIN_GRID_NODES} nodes, got {count}"
            )));
        }
        let length = m.injectivity_radius();
        let nf = count as f64;
        let mut nodes = Vec::with_capacity(count);
        let mut quad_weights = Vec::with_capacity(count);
        for k in 1..=count {
            let theta = (k as f64 - 0.5) * PI / nf;
            nodes.push(0.5 * length * (1.0 - theta.cos()));
            let series = crate::quadrature::csum(
                (1..=count / 2).map(|j| (2.0 * j as f64 * theta).cos() / (4.0 * (j * j) as f64 - 1.0)),
            );
            quad_weights.push(0.5 * length * (2.0 / nf) * (1.0 - 2.0 * series));
        }
        Ok(Self {
            nodes,
            quad_weights,
            length,
        })
    }

    /// Index in the grid with three times as many nodes that coincides with
    /// node `i` of this grid.
    pub fn refined_index(i: usize) -> usize {
        3 * i + 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ∫₀^{πR} f(r_i) dr with the grid weights.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        crate::quadrature::csum(values.iter().zip(&self.quad_weights).map(|(v, w)| v * w))
    }

    /// ∫_M f dv_g for radial f sampled on the grid.
    pub fn integrate_volume(&self, m: &ModelManifold, values: &[f64]) -> f64 {
        crate::quadrature::csum(
            values
                .iter()
                .zip(&self.quad_weights)
                .zip(&self.nodes)
                .map(|((v, w), &r)| v * w * m.area(r)),
        )
    }
}

/// Samples of a radial function at geodesic radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialFunction {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl RadialFunction {
    pub fn sample<F: Fn(f64) -> f64>(grid: &RadialGrid, f: F) -> Self {
        Self {
            nodes: grid.nodes.clone(),
            values: grid.nodes.iter().map(|&r| f(r)).collect(),
        }
    }

    pub fn from_values(grid: &RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::domain(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            nodes: grid.nodes.clone(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Finite-difference weights for derivatives 0..=m at `z` from arbitrary
/// nodes `x` (Fornberg's recursion). Returns c[k][j].
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// First and second derivatives on the grid with 5-point stencils. Radial
/// functions are even about both poles, so values are mirrored there
/// instead of switching to one-sided stencils.
pub fn radial_derivatives(grid: &RadialGrid, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    radial_derivatives_with(grid, u, true)
}

/// As [`radial_derivatives`]; with `even_at_pole = false` the stencils near
/// r = 0 are shifted one-sided instead (for functions like m + c·r that are
/// continuous but not smooth at the pole). The antipode is always mirrored.
pub fn radial_derivatives_with(grid: &RadialGrid, u: &[f64], even_at_pole: bool) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len();
    let x = &grid.nodes;
    let len = grid.length;
    // extended arrays with two mirrored nodes at each end
    let mut xe = Vec::with_capacity(n + 4);
    let mut ue = Vec::with_capacity(n + 4);
    xe.push(-x[1]);
    ue.push(u[1]);
    xe.push(-x[0]);
    ue.push(u[0]);
    xe.extend_from_slice(x);
    ue.extend_from_slice(u);
    xe.push(2.0 * len - x[n - 1]);
    ue.push(u[n - 1]);
    xe.push(2.0 * len - x[n - 2]);
    ue.push(u[n - 2]);
    let mut d1 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    for i in 0..n {
        let k = i + 2;
        let start = if even_at_pole { k - 2 } else { (k - 2).max(2) };
        let c = fornberg_weights(xe[k], &xe[start..start + 5], 2);
        let mut a = 0.0;
        let mut b = 0.0;
        for j in 0..5 {
            a += c[1][j] * ue[start + j];
            b += c[2][j] * ue[start + j];
        }
        d1.push(a);
        d2.push(b);
    }
    (d1, d2)
}

/// −u'' − (n−1)(cot(r/R)/R)u' by fourth-order finite differences.
pub fn radial_laplacian(m: &ModelManifold, grid: &RadialGrid, u: &RadialFunction) -> Result<RadialFunction> {
    if grid.len() < MIN_GRID_NODES {
        return Err(Error::Resolution(format!(
            "grid needs at least {MIN_GRID_NODES} nodes, got {}",
            grid.len()
        )));
    }
    if u.len() != grid.len() {
        return Err(Error::domain("function and grid sizes differ"));
    }
    let (d1, d2) = radial_derivatives(grid, &u.values);
    let values = grid
        .nodes
        .iter()
        .zip(d1.iter().zip(&d2))
        .map(|(&r, (a, b))| -b - m.drift(r) * a)
        .collect();
    Ok(RadialFunction {
        nodes: grid.nodes.clone(),
        values,
    })
}

/// Zonal spherical harmonic of degree k on Sⁿ: the Gegenbauer polynomial
/// C_k^{((n−1)/2)}(cos(r/R)). Eigenvalue k(k+n−1)/R².
pub fn zonal_harmonic(m: &ModelManifold, k: usize, r: f64) -> f64 {
    let lambda = (m.nf() - 1.0) / 2.0;
    let x = (r / m.radius).cos();
    let mut c_prev = 1.0;
    if k == 0 {
        return c_prev;
    }
    let mut c = 2.0 * lambda * x;
    for j in 1..k {
        let jf = j as f64;
        let next = (2.0 * (jf + lambda) * x * c - (jf + 2.0 * lambda - 1.0) * c_prev) / (jf + 1.0);
        c_prev = c;
        c = next;
    }
    c
}

pub fn zonal_eigenvalue(m: &ModelManifold, k: usize) -> f64 {
    let kf = k as f64;
    kf * (kf + m.nf() - 1.0) / (m.radius * m.radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartanReport {
    /// Fitted c in √det g ≈ 1 − c r².
    pub fitted: f64,
    /// Scal/(6n).
    pub target: f64,
    pub rel_err: f64,
    /// RMS of the fit residual relative to the RMS of the data.
    pub residual: f64,
}

/// Least-squares fit of the radial √det g = (sin(r/R)/(r/R))^{n−1} against
/// 1 − c r² + d r³ + e r⁴ on (0, r_max]; the last two are nuisance terms
/// absorbing the O(r³) remainder.
pub fn cartan_check(m: &ModelManifold, r_max: f64) -> Result<CartanReport> {
    m.validate()?;
    if !(r_max > 0.0) {
        return Err(Error::domain("r_max must be positive"));
    }
    if r_max > 0.1 * m.radius {
        return Err(Error::FitRange(format!(
            "r_max = {r_max} exceeds 0.1·R = {}",
            0.1 * m.radius
        )));
    }
    let samples = 200;
    let rs: Vec<f64> = (1..=samples).map(|k| r_max * k as f64 / samples as f64).collect();
    let a = DMatrix::from_fn(samples, 3, |i, j| rs[i].powi(j as i32 + 2));
    let y = DVector::from_iterator(samples, rs.iter().map(|&r| m.sqrt_det_minus_one(r)));
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&y, 1e-300)
        .map_err(|e| Error::FitRange(e.to_string()))?;
    let resid = &y - &a * &coef;
    let residual = resid.norm() / y.norm();
    let fitted = -coef[0];
    let target = m.scalar_curvature() / (6.0 * m.nf());
    let rel_err = (fitted / target - 1.0).abs();
    if residual > 1e-6 || rel_err > 1e-3 {
        return Err(Error::FitRange(format!(
            "quadratic model does not fit on (0, {r_max}]: residual {residual:.3e}, rel. error {rel_err:.3e}"
        )));
    }
    Ok(CartanReport {
        fitted,
        target,
        rel_err,
        residual,
    })
}
