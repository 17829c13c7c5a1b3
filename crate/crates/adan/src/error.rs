use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, AdanError>;

/// Errors emitted by the library.
#[derive(Error, Debug)]
pub enum AdanError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("batch of size {rows} is degenerate: train mode needs at least 2 rows")]
    DegenerateBatch { rows: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    Label { label: usize, num_classes: usize },

    #[error("non-finite value in {what}")]
    Numeric { what: String },

    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("embedding dimension mismatch: {expected} vs {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),

    #[error("model mode is {got}, operation requires {expected}")]
    Mode {
        expected: &'static str,
        got: String,
    },

    #[error("training diverged: non-finite loss at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("McNemar test undefined for b = c = 0")]
    UndefinedTest,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
