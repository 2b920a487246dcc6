use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed NIfTI file: {0}")]
    Format(String),

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("missing landmark label `{0}`")]
    MissingLandmark(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular design: {0}")]
    Singular(String),

    #[error("fit did not converge after {iterations} outer iterations (last relative change {last_change:.3e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        trace: Vec<f64>,
    },

    #[error("age {age} lies outside the fitted domain [{lower}, {upper}]")]
    Extrapolation { age: f64, lower: f64, upper: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
