use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid shape {rows}x{cols} for {len} entries")]
    InvalidShape { rows: usize, cols: usize, len: usize },

    #[error("point has no matrix shape")]
    MissingShape,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular value decomposition failed")]
    SvdFailure,

    #[error("linear solve failed: matrix is singular")]
    SingularSystem,

    #[error("resolvent sub-iteration did not converge after {iterations} steps (residual {residual:e})")]
    ResolventNotConverged { iterations: usize, residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(
        "inner loop at outer iteration {outer} hit its cap of {cap} iterations in contraction mode (residual {residual:e})"
    )]
    InnerCapExceeded {
        outer: usize,
        cap: usize,
        residual: f64,
    },

    #[error("problem generation failed: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
