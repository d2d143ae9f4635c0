use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while building or solving a subsampled system.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported polynomial family `{0}`")]
    UnsupportedFamily(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cardinality {requested} exceeds the configured cap of {cap}")]
    CardinalityCap { requested: u128, cap: usize },

    #[error("quadrature exactness violated: dimension {dim} needs at least {needed} points, grid has {available}")]
    Exactness {
        dim: usize,
        needed: usize,
        available: usize,
    },

    #[error("rank deficiency detected at pivot {iteration} (pivot norm {norm:e})")]
    PivotRankDeficient { iteration: usize, norm: f64 },

    #[error("least-squares matrix is numerically rank deficient: estimated rank {rank} of {cols}")]
    RankDeficient { rank: usize, cols: usize },

    #[error("singular preconditioner: column {0} has zero norm")]
    SingularPreconditioner(usize),

    #[error("singular value decomposition failed: {0}")]
    Svd(String),

    #[error("model evaluation failed at grid point {index} {point:?}: {message}")]
    ModelEvaluation {
        index: usize,
        point: Vec<f64>,
        message: String,
    },

    #[error("missing model evaluations for {} point(s): {}", .missing.len(), format_missing(.missing))]
    MissingEvaluations { missing: Vec<(usize, Vec<f64>)> },

    #[error("external command `{command}` failed: {message}")]
    ExternalCommand { command: String, message: String },

    #[error("malformed {what} at {path:?} line {line}: {message}")]
    Malformed {
        what: &'static str,
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("variance is zero; Sobol' indices are undefined")]
    ZeroVariance,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_missing(missing: &[(usize, Vec<f64>)]) -> String {
    missing
        .iter()
        .map(|(i, p)| {
            let coords: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
            format!("row {i} at ({})", coords.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}
