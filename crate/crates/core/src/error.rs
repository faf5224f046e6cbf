use thiserror::Error;

/// Errors produced by the solver and its kernels.
#[derive(Debug, Error)]
pub enum SlabError {
    #[error("matrix is singular: zero pivot at column {column}")]
    Singular { column: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("slab {slab} interior block is singular (zero pivot at local row {row})")]
    SingularSlab { slab: usize, row: usize },

    #[error("reduced block {block} is singular during the sweep (zero pivot at column {column})")]
    SingularSweep { block: usize, column: usize },

    #[error(
        "rank-structured compression failed{}: probe residual {residual:.3e} exceeds {tol:.1e} at rank {rank}",
        block.as_ref().map(|b| format!(" for {b}")).unwrap_or_default()
    )]
    CompressionFailed {
        residual: f64,
        tol: f64,
        rank: usize,
        block: Option<String>,
    },

    #[error("blocks ({j}, {k}) are not coupled in the reduced system")]
    NonAdjacentBlock { j: usize, k: usize },

    #[error("problem too large for dense oracle: {size} > {limit}")]
    OracleGuard { size: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = SlabError> = std::result::Result<T, E>;

impl SlabError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SlabError::InvalidInput(msg.into())
    }
}
