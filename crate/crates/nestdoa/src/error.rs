//! Error type shared by the whole crate.

/// Errors produced by geometry construction, estimation, and the harness.
#[derive(Debug, thiserror::Error)]
pub enum DoaError {
    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested operation needs a coarray structure this geometry
    /// does not provide (e.g. a contiguous difference coarray).
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    /// A steering manifold lost full column rank, typically because two
    /// candidate angles coalesced.
    #[error("degenerate manifold: {0}")]
    DegenerateManifold(String),

    /// A matrix that must be positive semidefinite has a significantly
    /// negative eigenvalue.
    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    /// Numerical failure inside a solver.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Configuration file problems; the message names the offending field.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DoaError>;
