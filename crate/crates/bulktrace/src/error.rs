use thiserror::Error;

/// Errors raised by the library. Each variant maps to one failure mode of the
/// numerical pipeline so callers can decide between a config error and a
/// numerical failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BtError {
    #[error("degenerate level-set gradient |grad phi| = {norm:.3e} at {point:?}")]
    DegenerateGradient { norm: f64, point: [f64; 3] },

    #[error("boundary normal parallel to level-set normal at {point:?}")]
    TangentialBoundary { point: [f64; 3] },

    #[error("unsupported case `{0}`")]
    UnsupportedCase(String),

    #[error("unsupported order p = {p} for dimension {dim}")]
    UnsupportedOrder { p: usize, dim: usize },

    #[error("inverted element {element}: det J = {det:.3e}")]
    InvertedElement { element: usize, det: f64 },

    #[error("inconsistent boundary conditions: {0}")]
    InconsistentBc(String),

    #[error("moment block of element {0} is not invertible")]
    SingularMomentBlock(usize),

    #[error("condensed system is not positive definite")]
    NotPositiveDefinite,

    #[error("direct solve left a relative residual of {0:.3e}")]
    InaccurateSolve(f64),

    #[error("sparse factorization failed: {0}")]
    FactorizationFailed(String),

    #[error("no exact solution available for `{0}`")]
    MissingExact(String),

    #[error("relative residual requested with zero load")]
    ZeroLoadRelativeResidual,

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for BtError {
    fn from(e: std::io::Error) -> Self {
        BtError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BtError>;
