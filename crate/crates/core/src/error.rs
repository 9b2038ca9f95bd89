use thiserror::Error;

use crate::model::OverlapState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("divergence: lambda + sigma_hat = {0} is not positive")]
    Divergence(f64),

    #[error("invalid state: zeta_in = {zeta_in}, zeta_out = {zeta_out}")]
    InvalidState { zeta_in: f64, zeta_out: f64 },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Box<OverlapState>,
    },

    #[error("Bayes-optimal iteration did not converge after {iterations} iterations (residual {residual:e}, q_b = {q_b})")]
    BayesNotConverged {
        iterations: usize,
        residual: f64,
        q_b: f64,
    },

    #[error("quadrature did not reach tolerance: estimate {estimate}, error {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("root finding failed: {0}")]
    Root(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("solver hit the iteration cap {iterations} (gradient norm {grad_norm:e})")]
    SolverCap { iterations: usize, grad_norm: f64 },

    #[error("GAMP failed after {iterations} iterations: {reason}")]
    Gamp { iterations: usize, reason: String },

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("{failed} of {total} Monte-Carlo seeds failed; first error: {first}")]
    MonteCarlo {
        failed: usize,
        total: usize,
        first: String,
    },
}

impl Error {
    /// Stable short tag for machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Domain(_) => "domain",
            Error::Divergence(_) => "divergence",
            Error::InvalidState { .. } => "invalid_state",
            Error::NotConverged { .. } => "not_converged",
            Error::BayesNotConverged { .. } => "bayes_not_converged",
            Error::Quadrature { .. } => "quadrature",
            Error::Root(_) => "root",
            Error::Singular(_) => "singular",
            Error::SolverCap { .. } => "solver_cap",
            Error::Gamp { .. } => "gamp",
            Error::Optimizer(_) => "optimizer",
            Error::MonteCarlo { .. } => "monte_carlo",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
