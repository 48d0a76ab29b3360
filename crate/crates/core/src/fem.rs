//! Piecewise-linear finite elements for radial functions on a sphere, with
//! lumped (dual-cell) mass. Node i owns the cell [m_{i−1}, m_i] between
//! element midpoints, with m_0 = 0 and m_N = πR, so the flux through both
//! poles vanishes without either pole being a node.

use crate::error::{Error, Result};
use crate::geometry::{ModelManifold, RadialGrid};
use crate::potential::Potential;
use crate::quadrature::{gauss_legendre, integrate, Tolerance};
use crate::tridiag::SymTridiagonal;

#[derive(Debug, Clone)]
pub struct RadialFem {
    pub manifold: ModelManifold,
    pub nodes: Vec<f64>,
    /// k_e = ∫_{r_e}^{r_{e+1}} |S_r| dr / h_e², so ∫|∇u|² = Σ k_e (u_{e+1} − u_e)².
    pub stiffness: Vec<f64>,
    /// M_i = ∫_{cell i} |S_r| dr
    pub mass: Vec<f64>,
    /// Cell boundaries m_0 = 0 < m_1 < … < m_N = πR.
    pub cells: Vec<f64>,
}

impl RadialFem {
    pub fn new(manifold: &ModelManifold, grid: &RadialGrid) -> Result<Self> {
        let nodes = grid.nodes.clone();
        let n = nodes.len();
        if n < 2 {
            return Err(Error::Resolution("finite elements need at least two nodes".into()));
        }
        let (gx, gw) = gauss_legendre(8);
        let area_integral = |a: f64, b: f64| -> f64 {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            gx.iter()
                .zip(&gw)
                .map(|(x, w)| w * manifold.area(mid + half * x))
                .sum::<f64>()
                * half
        };
        let stiffness = nodes
            .windows(2)
            .map(|w| {
                let h = w[1] - w[0];
                area_integral(w[0], w[1]) / (h * h)
            })
            .collect();
        let mut cells = Vec::with_capacity(n + 1);
        cells.push(0.0);
        cells.extend(nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        cells.push(grid.length);
        let mass = cells.windows(2).map(|w| area_integral(w[0], w[1])).collect();
        Ok(Self {
            manifold: *manifold,
            nodes,
            stiffness,
            mass,
            cells,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// W_i = ∫_{cell i} r^{−s} |S_r| dr, integrated exactly per cell (the
    /// first cell contains the singular point).
    pub fn weighted_mass(&self, s: f64) -> Result<Vec<f64>> {
        let m = self.manifold;
        self.cells
            .windows(2)
            .map(|w| {
                integrate(|r| if r > 0.0 { r.powf(-s) * m.area(r) } else { 0.0 }, w[0], w[1], Tolerance::relative(1e-14))
                    .map(|e| e.value)
            })
            .collect()
    }

    /// Nodal potential values a(r_i).
    pub fn potential_values(&self, a: &Potential) -> Vec<f64> {
        self.nodes.iter().map(|&r| a.value(r)).collect()
    }

    /// The matrix of u ↦ ∫(|∇u|² + a u²) with lumped mass: K + diag(a_i M_i).
    pub fn operator(&self, a: &[f64]) -> SymTridiagonal {
        let n = self.len();
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n - 1];
        for (e, &k) in self.stiffness.iter().enumerate() {
            diag[e] += k;
            diag[e + 1] += k;
            off[e] = -k;
        }
        for i in 0..n {
            diag[i] += a[i] * self.mass[i];
        }
        SymTridiagonal { diag, off }
    }

    /// Σ k_e (u_{e+1} − u_e)² + Σ a_i M_i u_i²
    pub fn energy(&self, a: &[f64], u: &[f64]) -> f64 {
        let grad = crate::quadrature::csum(self.stiffness.iter().enumerate().map(|(e, k)| {
            let d = u[e + 1] - u[e];
            k * d * d
        }));
        let pot = crate::quadrature::csum((0..u.len()).map(|i| a[i] * self.mass[i] * u[i] * u[i]));
        grad + pot
    }

    /// Smallest eigenvalue of (K + aM) v = μ M v, the discrete coercivity
    /// margin (lowest Rayleigh quotient of Δ + a). Sturm bisection brackets
    /// it; shifted inverse iteration then polishes the eigenvector and the
    /// quotient is taken through the energy form, which keeps relative
    /// accuracy even though the matrix norm is dominated by tiny pole cells.
    pub fn coercivity_margin(&self, a: &[f64]) -> Result<f64> {
        let op = self.operator(a);
        let sq: Vec<f64> = self.mass.iter().map(|m| m.sqrt()).collect();
        let diag = op.diag.iter().zip(&sq).map(|(d, s)| d / (s * s)).collect();
        let off = op.off.iter().enumerate().map(|(i, o)| o / (sq[i] * sq[i + 1])).collect();
        let rough = SymTridiagonal { diag, off }.lowest_eigenvalue(1e-13);
        let shift = rough - 1e-3 * (1.0 + rough.abs());
        let shifted_a: Vec<f64> = a.iter().map(|x| x - shift).collect();
        let shifted = self.operator(&shifted_a);
        let mut v = vec![1.0; self.len()];
        let mut mu = rough;
        for _ in 0..60 {
            let rhs: Vec<f64> = v.iter().zip(&self.mass).map(|(x, m)| x * m).collect();
            let w = shifted.solve(&rhs)?;
            let norm = w.iter().map(|x| x.abs()).fold(0.0, f64::max);
            v = w.iter().map(|x| x / norm).collect();
            let mv: f64 = crate::quadrature::csum(v.iter().zip(&self.mass).map(|(x, m)| m * x * x));
            let next = self.energy(a, &v) / mv;
            let done = (next - mu).abs() <= 1e-15 * next.abs().max(1e-300);
            mu = next;
            if done {
                break;
            }
        }
        Ok(mu)
    }
}
