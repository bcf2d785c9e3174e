use thiserror::Error;

/// Errors raised by the geometry, variation and stability routines.
#[derive(Debug, Error)]
pub enum WstabError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("singular boundary at {0}: |grad Phi| vanishes")]
    SingularBoundary(String),
    #[error("immersion error: {0}")]
    Immersion(String),
    #[error("meshing error: {0}")]
    Meshing(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = WstabError> = std::result::Result<T, E>;
