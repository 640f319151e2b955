use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: vocabulary is empty")]
    EmptyVocabulary { path: PathBuf },

    #[error("{path}: duplicate token {token:?} on lines {first_line} and {second_line}")]
    DuplicateToken {
        path: PathBuf,
        token: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: header declares {expected} rows but file has {found}")]
    RowCountMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: non-finite value {value:?}")]
    NonFinite {
        path: PathBuf,
        line: usize,
        value: String,
    },

    #[error("{path}: bad magic bytes, not a matrix/tensor file")]
    BadMagic { path: PathBuf },

    #[error("{path}: short read, expected {expected} bytes of payload, found {found}")]
    ShortRead {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: header claims {rows}x{dim} but payload holds {values} values")]
    SizeMismatch {
        path: PathBuf,
        rows: usize,
        dim: usize,
        values: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank {rank} out of range for a {rows}x{dim} matrix")]
    RankOutOfRange { rank: usize, rows: usize, dim: usize },

    #[error("SVD did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("matrix of {rows}x{dim} exceeds the oracle size cap of 64x64")]
    OracleTooLarge { rows: usize, dim: usize },

    #[error("matrix contains non-finite values")]
    NonFiniteMatrix,

    #[error("hypernetwork input for example {index} is empty")]
    EmptyInput { index: usize },

    #[error("token {token_id} has no matched words")]
    NoMatches { token_id: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: String },

    #[error("training diverged at epoch {epoch} (train loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        last_good: Box<crate::hypernet::HypernetParams>,
    },

    #[error("initialization invariant violated: {0}")]
    Coverage(String),

    #[error("k = {k} exceeds the {candidates} available candidates")]
    KTooLarge { k: usize, candidates: usize },

    #[error("infeasible benchmark config: {0}")]
    Infeasible(String),

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
        partial_manifest: Box<crate::eval::Manifest>,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
