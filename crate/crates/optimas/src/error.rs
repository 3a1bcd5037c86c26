//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A graph, configuration, or run-config document failed validation.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Execution of a system failed (dimension mismatch, inactive component, ...).
    #[error("execution failed: {0}")]
    Execution(String),

    /// A component was not reachable for the given input instance.
    #[error("component {component} inactive for instance")]
    ComponentInactive { component: usize },

    /// Numeric failure during training or scoring (non-finite values).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Preference generation could not produce distinct candidates.
    #[error("component {component} has no candidate diversity source")]
    NoCandidateDiversity { component: usize },

    /// Enumeration request exceeds the evaluation budget.
    #[error(
        "enumeration too large: {configs} configs x {inputs} inputs x {noise_points} noise points \
         = {total} evaluations (limit {limit})"
    )]
    EnumerationTooLarge {
        configs: usize,
        inputs: usize,
        noise_points: usize,
        total: usize,
        limit: usize,
    },

    /// Malformed or unreadable input document.
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn execution(msg: impl Into<String>) -> Self {
        Error::Execution(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for validation/parse problems,
    /// 3 for execution/numeric/io failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse { .. } => 2,
            _ => 3,
        }
    }
}
