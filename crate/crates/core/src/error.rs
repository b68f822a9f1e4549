use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its valid range. `field` is a dotted path
    /// (`spec.family.p`) so manifest users can find the offending entry.
    #[error("invalid value for `{field}`: {message}")]
    InvalidInput { field: String, message: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("resource limit exceeded: {message}{}", snapshot_suffix(.snapshot))]
    ResourceLimit {
        message: String,
        snapshot: Option<PathBuf>,
    },

    #[error("oracle enumeration refused: {leaves} leaves exceed the budget of {budget}")]
    OracleBudget { leaves: u128, budget: u128 },

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("manifest schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn snapshot_suffix(snapshot: &Option<PathBuf>) -> String {
    match snapshot {
        Some(p) => format!(" (partial state written to {})", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvariantViolation(_) => 1,
            Error::ResourceLimit { .. } | Error::OracleBudget { .. } => 3,
            _ => 2,
        }
    }
}
