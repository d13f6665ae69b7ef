use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Fock truncation N={dim} too small for |alpha|={abs_alpha}: tail mass {tail:.3e} exceeds 1e-12")]
    Truncation { abs_alpha: f64, dim: usize, tail: f64 },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("not a density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("model is not normalizable on the sampling grid (integral {0})")]
    NotNormalizable(f64),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("no samples")]
    NoSamples,

    #[error("no (theta, theta+pi) phase pairs within {tolerance} rad; the symmetry error functional requires paired phases")]
    MissingPairs { tolerance: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("phase grids differ between tomogram sources")]
    PhaseGridMismatch,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
