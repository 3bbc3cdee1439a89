use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor received an inconsistent parameter set.
    #[error("invalid `{field}`: {reason}")]
    Construction { field: String, reason: String },

    /// Shapes or lengths that must agree do not.
    #[error("structural mismatch: {0}")]
    Structural(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("numeric fault at {context} (step {step})")]
    NumericFault { context: String, step: u64 },

    #[error("no completed episodes in the multiplier window; skip this update")]
    EmptyWindow,

    #[error("enumeration budget exceeded: {count} trajectories (budget {budget})")]
    BudgetExceeded { count: u128, budget: u128 },

    #[error("unknown {what} `{name}`")]
    UnknownName { what: &'static str, name: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn construction(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Construction {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn numeric(context: impl Into<String>, step: u64) -> Self {
        Error::NumericFault {
            context: context.into(),
            step,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI. Zero is reserved for success.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::UnknownName { .. } | Error::Construction { .. } => 2,
            Error::NumericFault { .. } => 3,
            Error::Checkpoint(_) => 4,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 5,
            Error::Structural(_) | Error::EmptyWindow | Error::BudgetExceeded { .. } => 6,
        }
    }
}
