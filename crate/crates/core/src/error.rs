use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("degenerate direction: norm {norm:e} below threshold")]
    DegenerateDirection { norm: f64 },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("vMF rejection sampler exceeded {0} iterations")]
    SamplerExhausted(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures that stem from numerics rather than bad input or I/O.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDirection { .. } | Error::NonFinite(_) | Error::SamplerExhausted(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
