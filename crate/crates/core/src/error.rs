//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by geometry, flow and analysis operations.
#[derive(Debug, Error)]
pub enum Error {
    /// An input contained NaN or infinite entries.
    #[error("non-finite input in {context}")]
    NonFinite { context: &'static str },

    /// A point to be mapped through an inverse lies outside the image of the
    /// diffeomorphism (e.g. |y2| >= 1 for the modeled double-Gaussian map).
    #[error("point outside the image of the diffeomorphism: {context}")]
    OutOfImage { context: &'static str },

    /// Dimension or shape mismatch.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An operation was applied in an invalid state, e.g. evaluating an
    /// uninitialized actnorm layer outside the training init pass.
    #[error("invalid state: {0}")]
    State(String),

    /// Iso-exponential stepping left the image of the diffeomorphism before
    /// reaching the target arc length. Carries the partial trace summary.
    #[error(
        "iso-exponential trajectory left the image after {steps} steps \
         (arc length {achieved} of {target})"
    )]
    IncompleteGeodesic {
        steps: usize,
        achieved: f64,
        target: f64,
        last_point: Vec<f64>,
    },

    /// Iso-exponential stepping hit the maximum step cap.
    #[error("iso-exponential stepping exceeded the cap of {cap} steps")]
    StepCap { cap: usize },

    /// A rel-RMSE denominator was (numerically) zero: all data coincide with
    /// the base point.
    #[error("degenerate rel-RMSE denominator: all data points equal the base point")]
    DegenerateDenominator,

    /// One or more data columns failed a per-column operation.
    #[error("operation failed on columns {indices:?}: {message}")]
    Columns {
        indices: Vec<usize>,
        message: String,
    },

    /// Malformed data file (bad magic number, truncation, count mismatch).
    #[error("data format error: {0}")]
    Format(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// Training aborted on a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch} (parameter block {block})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        block: String,
    },
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
