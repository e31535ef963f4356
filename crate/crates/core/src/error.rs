use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time range: t_max ({t_max}) must exceed t_min ({t_min})")]
    InvalidRange { t_min: f64, t_max: f64 },

    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("time {t} lies outside the basis domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at time {t}, unit {unit}, variable {var}")]
    NonFinite { t: usize, unit: usize, var: usize },

    #[error("structural zero violated at ({row}, {col}): |{value}| exceeds {tol}")]
    StructuralZero {
        row: usize,
        col: usize,
        value: f64,
        tol: f64,
    },

    #[error("weighted adjacency at time {0} is cyclic")]
    Cyclic(f64),

    #[error("mediator block is singular; (I - C^T) cannot be inverted")]
    SingularMediatorBlock,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
