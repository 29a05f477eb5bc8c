use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("matrix is singular (pivot below tolerance)")]
    SingularMatrix,
    #[error("Laplacian minor is singular; degenerate score matrix")]
    SingularLaplacian,
    #[error("document has {0} sentences, enumeration is limited to {1}")]
    TooLarge(usize, usize),
    #[error("document contains no sentences")]
    EmptyDocument,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss on document {doc_id}")]
    NonFiniteLoss { doc_id: String },
    #[error("checkpoint vocabulary hash does not match the loaded vocabulary")]
    VocabMismatch,
    #[error("all reweighted root scores are zero")]
    AllZeroRootMass,
    #[error("linear system is singular")]
    SingularSystem,
    #[error("reference summary is empty")]
    EmptyReference,
    #[error("malformed input at line {line}: {message}")]
    MalformedInput { line: usize, message: String },
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
