//! Event-based camera pose & motion tracking against an implicit scene map.
//!
//! The tracker recovers a camera's pose and motion from sparse
//! intensity-change events by matching them against the temporal gradient of
//! a differentiable volume-rendered scene. The crate bundles everything
//! needed to exercise that idea end to end at desk scale: twist/SE(3)
//! geometry, a nestable forward-mode + tape-based reverse-mode autodiff
//! engine, analytic and trained-MLP scene fields with quadrature volume
//! rendering, an event simulator, the sparse tracker and its dense
//! photometric baseline, procedural dataset generation, and an evaluation
//! harness.

pub mod autodiff;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod events;
pub mod field;
pub mod geometry;
pub mod image;
pub mod tracker;
pub mod training;

use std::path::PathBuf;

/// Crate-wide error type. The CLI maps variants onto exit codes
/// (config -> 2, data/io/shape -> 3, numeric/resource -> 4).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("resource limit: {0}")]
    Resource(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Format a float with enough digits to both round-trip exactly and satisfy
/// the >= 9 significant digit file contracts.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
