use thiserror::Error;

/// Errors raised by state construction, exact bounds and the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("commutator i[rho, H] is degenerate (Frobenius norm {norm:e})")]
    DegenerateCommutator { norm: f64 },

    #[error("Krylov subspace terminates at n* = {n_star}; order {requested} requested")]
    SubspaceTerminated { requested: usize, n_star: usize },

    #[error("Hankel system of order {order} is ill-conditioned (condition number {condition:e})")]
    IllConditioned { order: usize, condition: f64 },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable tag, used in the CLI's error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "invalid_dimension",
            Error::Domain(_) => "domain",
            Error::Validation(_) => "validation",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DegenerateCommutator { .. } => "degenerate_commutator",
            Error::SubspaceTerminated { .. } => "subspace_terminated",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::Resource(_) => "resource",
            Error::InsufficientData(_) => "insufficient_data",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
