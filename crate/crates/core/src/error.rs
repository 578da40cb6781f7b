use std::path::PathBuf;

/// Errors produced anywhere in the pipeline, from factorization to CSV output.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("SVD of a {rows}x{cols} matrix did not converge")]
    NoConvergence { rows: usize, cols: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("designated columns are not orthonormal (Gram residual {residual:.3e})")]
    NotOrthonormal { residual: f64 },

    #[error("degenerate channel: stacked matrix has rank {rank}, expected {expected}")]
    DegenerateChannel { rank: usize, expected: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("multiplier search failed: {0}")]
    Bisection(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
