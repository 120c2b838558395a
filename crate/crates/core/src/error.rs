use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{func}: argument outside domain ({detail})")]
    Domain { func: &'static str, detail: String },

    #[error("{func}: value {value} outside the admissible range {range}")]
    Range {
        func: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("{func}: no convergence after {iterations} iterations (last term {last_term:e})")]
    Convergence {
        func: &'static str,
        iterations: usize,
        last_term: f64,
    },

    #[error("singular linear system at pivot {pivot}")]
    Singular { pivot: usize },

    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("clipping: {0}")]
    Clipping(String),

    #[error("diffraction orders overlap: {0}")]
    OrderOverlap(String),

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }

    /// True for failures of a numerical procedure, as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. }
                | Error::Singular { .. }
                | Error::Integrator(_)
                | Error::Clipping(_)
                | Error::OrderOverlap(_)
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
