//! Numerical verification of the variational machinery behind the critical
//! Hardy–Sobolev equation Δ_g u + a u = u^{2*(s)−1}/d_g(x,x₀)^s on round
//! spheres: sharp constants, bubble identities, test-function expansions,
//! Green's function masses and a subcritical minimization scheme.

pub mod bubble;
pub mod error;
pub mod fem;
pub mod fit;
pub mod geometry;
pub mod green;
pub mod potential;
pub mod quadrature;
pub mod special;
pub mod subcritical;
pub mod test_functions;
pub mod tridiag;

pub use error::{Error, Result};
