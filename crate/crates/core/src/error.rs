use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("entry count {len} does not match shape {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("svd did not converge after {sweeps} sweeps (off-diagonal ratio {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("matrix is numerically singular (sigma_min = {sigma_min:e})")]
    Singular { sigma_min: f64 },

    #[error("matrix has zero numerical rank")]
    DegenerateRank,

    #[error("perturbation is not acute (residual {residual:e})")]
    NotAcute { residual: f64 },

    #[error("pseudo-inverse bound inapplicable: gamma = {gamma}")]
    BoundInapplicable { gamma: f64 },

    #[error("right-hand side has no component in the range of W")]
    DegenerateRhs,

    #[error("key drift undefined: W^+ v is zero")]
    UndefinedDrift,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Error::File {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True for failures that come from the numerics rather than from
    /// user input or the filesystem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::Singular { .. }
                | Error::DegenerateRank
                | Error::NotAcute { .. }
                | Error::BoundInapplicable { .. }
                | Error::DegenerateRhs
                | Error::UndefinedDrift
                | Error::UndefinedMetric(_)
                | Error::Infeasible(_)
                | Error::NonFinite { .. }
        )
    }
}
