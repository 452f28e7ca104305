use thiserror::Error;

/// Errors raised by fitting, testing and power computations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("basis term `{term}` is undefined at x = {value}")]
    Domain { term: String, value: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("constraint matrix is rank deficient (rank {rank} < {rows} rows)")]
    RankDeficient { rank: usize, rows: usize },

    #[error("hypothesis parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("index {index} out of range (valid 1..={max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("{which} fit failed: {source}")]
    FitFailed {
        which: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("quadrature failed for {0}")]
    Quadrature(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("target power {target} unreachable for n <= {max_n}; achieved {achieved:.4}")]
    Unreachable { target: f64, achieved: f64, max_n: u64 },

    #[error("study aborted: {failures} of {replicates} replicate fits failed")]
    StudyAborted { failures: usize, replicates: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. }
            | Error::Singular(_)
            | Error::Quadrature(_)
            | Error::Consistency(_)
            | Error::Unreachable { .. }
            | Error::StudyAborted { .. } => true,
            Error::FitFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
