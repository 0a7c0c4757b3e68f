use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("linearization is infeasible: {0}")]
    LinearizationInfeasible(String),

    #[error("barrier solver did not converge after {iterations} Newton steps (last objective {last_objective:.6e})")]
    SolverExhausted { iterations: usize, last_objective: f64 },

    #[error("SCA iteration {iteration}: {source}")]
    Sca {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Validation {
        field,
        reason: reason.into(),
    }
}
