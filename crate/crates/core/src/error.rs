use thiserror::Error;

/// Errors produced anywhere in the witness pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model, basis, operator or grid parameters.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An input state was not normalized.
    #[error("state not normalized: norm^2 = {norm_sq} (tolerance {tolerance:e})")]
    Normalization { norm_sq: f64, tolerance: f64 },

    /// A numerical invariant that must hold for any correct computation was violated.
    #[error("integrity check failed: {0}")]
    Integrity(String),

    /// The requested problem does not fit in the configured memory budget.
    #[error("resource limit: {0}")]
    Resource(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
