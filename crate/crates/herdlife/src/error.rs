use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    Usage,
    Data,
    Divergence,
}

#[derive(Debug, Error)]
pub enum HerdError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("missing input file {0}")]
    MissingFile(PathBuf),

    #[error("{path}: header mismatch for {table}: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        path: PathBuf,
        table: &'static str,
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("{path}: {rejected} of {total} rows unparseable (over 50%)")]
    TooManyRejects {
        path: PathBuf,
        rejected: usize,
        total: usize,
    },

    #[error("culling date {culling} precedes birth date {birth}")]
    CullingBeforeBirth {
        birth: chrono::NaiveDate,
        culling: chrono::NaiveDate,
    },

    #[error("age at first calving {age} outside [0, {hl}]")]
    InvalidFirstCalvingAge { age: i64, hl: i64 },

    #[error("herd-life days must be non-negative, got {0}")]
    NegativeDays(f64),

    #[error("split fraction {0} outside (0, 1)")]
    InvalidFraction(f64),

    #[error("need at least 2 cows to split, got {0}")]
    TooFewCows(usize),

    #[error("cow {0} has no event records")]
    EmptyHistory(String),

    #[error("sequence length must be at least 1")]
    ZeroSequenceLength,

    #[error("k = {k} outside 1..={l}")]
    KOutOfRange { k: usize, l: usize },

    #[error("no samples provided")]
    EmptySamples,

    #[error("batch size must be at least 1")]
    ZeroBatchSize,

    #[error("metric input: {0}")]
    Metric(String),

    #[error("design matrix is degenerate: {0}")]
    DegenerateDesign(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("model has no trained target statistics")]
    UntrainedModel,

    #[error("infeasible generator targets: {0}")]
    InfeasibleTargets(String),

    #[error("checkpoint error on {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Tensor(#[from] herdlife_tensor::TensorError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HerdError {
    pub fn failure_class(&self) -> FailureClass {
        match self {
            HerdError::Diverged { .. } => FailureClass::Divergence,
            HerdError::Config(_)
            | HerdError::InvalidFraction(_)
            | HerdError::ZeroSequenceLength
            | HerdError::ZeroBatchSize => FailureClass::Usage,
            _ => FailureClass::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HerdError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        HerdError::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HerdError>;
