use thiserror::Error;

/// Errors raised by the spectral toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("matrices {i} and {j} do not commute (residual {residual:e})")]
    NonCommuting { i: usize, j: usize, residual: f64 },

    #[error("no vector meets the residual tolerance (residual {residual:e}, allowed {allowed:e})")]
    ResidualTooLarge { residual: f64, allowed: f64 },

    #[error("eigenvalue {point:?} lies within the tolerance band of the region boundary")]
    BoundaryAmbiguous { point: Vec<(f64, f64)> },

    #[error("subspace is not invariant (residual {residual:e})")]
    NotInvariant { residual: f64 },

    #[error("operator is not triangular with respect to the flag (residual {residual:e})")]
    NotTriangular { residual: f64 },

    #[error("matrix is numerically singular (smallest singular value {sigma_min:e})")]
    Singular { sigma_min: f64 },

    #[error("atom {atom} lies outside the polydisk")]
    AtomOutsidePolydisk { atom: usize },

    #[error("function is not defined at {point:?}")]
    DomainViolation { point: Vec<(f64, f64)> },

    #[error("index {index} out of range (length {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("nilpotency tests disagree (power ratio {power_ratio:e}, spectral radius ratio {radius_ratio:e})")]
    NilpotencyDisagreement { power_ratio: f64, radius_ratio: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
