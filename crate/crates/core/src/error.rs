use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data or configuration violates a contract.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("duplicate entity name {0:?}")]
    DuplicateName(String),

    #[error("dangling reference: fact #{index} refers to unknown {what} {id}")]
    DanglingReference { index: usize, what: &'static str, id: u32 },

    #[error("duplicate fact ({head}, {relation}, {tail})")]
    DuplicateFact { head: u32, relation: u32, tail: u32 },

    #[error("self-loop fact on entity {0}")]
    SelfLoop(u32),

    #[error("unknown {what} {id}")]
    Unknown { what: &'static str, id: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("uncorruptible fact #{0}: no same-type substitute on either side")]
    Uncorruptible(usize),

    #[error("eigensolver did not converge after {iterations} iterations (max residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{0}")]
    Emission(String),

    #[error("inconsistent labels for input {0}")]
    InconsistentLabels(String),

    #[error("provider failed after {attempts} attempts: {message}")]
    Provider { attempts: u32, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Csv(_) | Error::NoConvergence { .. } | Error::Provider { .. }
        )
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse { line: err.line(), column: err.column(), message: err.to_string() }
    }
}
