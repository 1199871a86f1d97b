use std::fmt;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A point was passed to a kernel outside the kernel's domain.
    #[error("point {point:?} lies outside the kernel domain {domain}")]
    Domain { point: Vec<f64>, domain: String },

    /// Arguments violate a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A numerical routine failed (factorization, eigensolve, linear solve).
    #[error("numerical failure: {message}{}", Diagnostics(.diagnostics))]
    Numerical {
        message: String,
        diagnostics: Vec<String>,
    },

    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, diagnostics: Vec<String>) -> Self {
        Error::Numerical {
            message: msg.into(),
            diagnostics,
        }
    }

    /// True for failures of numerical routines, as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. })
    }
}

struct Diagnostics<'a>(&'a [String]);

impl fmt::Display for Diagnostics<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return Ok(());
        }
        write!(f, " [{}]", self.0.join("; "))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
