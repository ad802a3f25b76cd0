use thiserror::Error;

use crate::qml::QmlFit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("parameter vector is not stationary (persistence {persistence})")]
    NotStationary { persistence: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("QML optimizer did not converge (best score norm {:e})", .0.score_norm)]
    DidNotConverge(Box<QmlFit>),

    #[error("singular information: {0}")]
    SingularInformation(String),

    #[error("{failed} of {attempted} {what} failed, above the {limit} failure limit")]
    TooManyFailures {
        what: &'static str,
        failed: usize,
        attempted: usize,
        limit: f64,
    },

    #[error("invalid price {value} at row {row}")]
    InvalidPrice { row: usize, value: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. } => 2,
            Error::InvalidPrice { .. }
            | Error::Parse { .. }
            | Error::DegenerateSample(_)
            | Error::DegenerateData(_)
            | Error::Io(_) => 3,
            Error::NotStationary { .. }
            | Error::DidNotConverge(_)
            | Error::SingularInformation(_)
            | Error::TooManyFailures { .. } => 4,
        }
    }
}
