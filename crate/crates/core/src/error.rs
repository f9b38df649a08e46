use thiserror::Error;

/// Errors raised by point-set handling, kernel algebra and the dense
/// linear-algebra pipeline.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error on line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("points {0} and {1} coincide")]
    CoincidentPoints(usize, usize),

    #[error("point set is not unisolvent for the polynomial space: {0}")]
    Unisolvent(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("matrix is singular to working precision (pivot {pivot:.3e})")]
    Singular { pivot: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("eigenvalue iteration failed to converge")]
    NoConvergence,

    #[error("kernel algebra: {0}")]
    KernelAlgebra(String),

    #[error("kernel and operator are incompatible: {0}")]
    Incompatible(String),

    #[error("kernel is not conditionally positive definite of the requested order: {0}")]
    CpdViolation(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("local stencil {index}: {source}")]
    Stencil {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("time integration blew up at step {step}")]
    BlowUp { step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
