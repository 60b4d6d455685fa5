use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Missing columns, bad flags, inconsistent settings.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("column '{0}' has zero variance")]
    ZeroVariance(String),

    /// |theta_WZ| is too small for the negative-control correction to be defined.
    #[error(
        "identification failure: |theta_WZ| = {theta_wz:e} <= tol {tol:e}; \
         assumptions A6/A7 (W and Z informative about U) look violated"
    )]
    Identification { theta_wz: f64, tol: f64 },

    #[error(
        "identification failed in {failed} of {total} draws (|theta_WZ| below tolerance); \
         assumptions A6/A7 (W and Z informative about U) look violated"
    )]
    IdentificationRate { failed: usize, total: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replicate {replicate}: {source}")]
    AtReplicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips iteration/replicate context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } | Error::AtReplicate { source, .. } => source.root(),
            other => other,
        }
    }
}
