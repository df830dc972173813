use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("unstable system: spectral radius {0} >= 1")]
    Unstable(f64),

    #[error("graph is not strongly connected")]
    NotConnected,

    #[error("invalid input: {0}")]
    Input(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("parameter layout mismatch")]
    LayoutMismatch,

    #[error("empty update list")]
    EmptyUpdates,

    #[error("internal consistency violation: {0}")]
    Consistency(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
