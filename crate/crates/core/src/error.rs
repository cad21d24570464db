//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

/// Errors produced by the screening pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument to a numerical routine (non-finite, out of domain).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration: bad flags, incompatible dimensions, bad geometry.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// A feature that must be pre-filtered before dispersion estimation.
    #[error("dispersion error: {0}")]
    Dispersion(String),

    /// Non-finite intermediate detected while fitting one feature.
    #[error("numerical failure for feature {feature}: {message}")]
    Numerical { feature: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error class: 2 for configuration
    /// problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) => 2,
            Error::Data(_) | Error::Dispersion(_) | Error::Numerical { .. } | Error::Io(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
