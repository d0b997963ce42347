use thiserror::Error;

/// Errors reported by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CFL condition violated: Courant number {courant} exceeds 1")]
    Cfl { courant: f64 },

    #[error("explicit Euler step unstable: kappa * dt = {kappa_dt} >= 1")]
    Stability { kappa_dt: f64 },

    #[error("quadrature did not reach relative tolerance {tolerance:e} (estimate {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64 },

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
