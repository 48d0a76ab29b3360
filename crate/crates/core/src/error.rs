use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested integral does not converge for the given parameters.
    #[error("divergent integral `{field}`: {reason}")]
    Divergent { field: &'static str, reason: String },

    /// The radial grid is too coarse, or a discrete residual is too large.
    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("fit-range error: {0}")]
    FitRange(String),

    /// An asymptotic fit whose residual is above the acceptance threshold.
    #[error("inconclusive fit ({model}): residual {residual:.3e} above {threshold:.1e}")]
    InconclusiveFit {
        model: String,
        residual: f64,
        threshold: f64,
        slope: f64,
    },

    #[error("quadrature error: {0}")]
    Quadrature(String),

    /// Δ_g + a is not coercive on the grid.
    #[error("operator not coercive: smallest Rayleigh quotient {margin:.6e}")]
    Coercivity { margin: f64 },

    /// The constrained minimizer failed; carries the energy trace.
    #[error("optimizer failure after {iterations} iterations: {reason}")]
    Optimizer {
        reason: String,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error("property violation: {0}")]
    PropertyViolation(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of iterative or fitting procedures (as opposed to
    /// invalid inputs).
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            Error::InconclusiveFit { .. }
                | Error::Optimizer { .. }
                | Error::Resolution(_)
                | Error::Quadrature(_)
                | Error::FitRange(_)
        )
    }
}
