use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the engine.
///
/// Variants fall into three families that map onto the CLI exit codes:
/// validation problems (2), coverage gaps (3) and numeric degeneracy (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown bias test '{0}'")]
    UnknownTest(String),
    #[error("descriptor '{descriptor}' is not available for test {test}")]
    DescriptorUnavailable { test: String, descriptor: String },
    #[error("no simplified target lists are registered for test {0}")]
    NoSimplifiedVariant(String),
    #[error("invalid stimulus {text:?}: {reason}")]
    InvalidStimulus { text: String, reason: &'static str },
    #[error("duplicate stimulus {stimulus:?} in set {role}")]
    DuplicateStimulus { role: String, stimulus: String },
    #[error("set {role} of test {test} is empty")]
    EmptySet { test: String, role: String },
    #[error("operation requires variant {expected}, got {found}")]
    WrongVariant { expected: String, found: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("template {id}: {message}")]
    Template { id: u64, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("line {line}: non-finite vector component")]
    NonFinite { line: usize },
    #[error("line {line}: duplicate record key {key}")]
    DuplicateKey { line: usize, key: String },
    #[error("overlapping spans")]
    OverlappingSpans,

    #[error("missing record for {0}")]
    MissingKey(String),
    #[error("level '{level}' unavailable for {key}")]
    LevelUnavailable { key: String, level: String },
    #[error("missing data: {}", .0.join("; "))]
    Coverage(Vec<String>),
    #[error("unequal context counts between target sets: {}", .0.join(", "))]
    UnequalContexts(Vec<String>),

    #[error("zero vector: cosine is undefined")]
    ZeroVector,
    #[error("degenerate variance: all association scores are equal")]
    DegenerateVariance,
    #[error("{partitions} partitions exceed the exact-enumeration budget of {budget}; use the sampled test")]
    BudgetExceeded { partitions: u128, budget: u128 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("probability underflow for (target={target}, attribute={attribute}, context={context_id}): {value:e}")]
    Underflow {
        target: String,
        attribute: String,
        context_id: u64,
        value: f64,
    },
    #[error("{skipped} of {total} samples had degenerate variance (limit 1%)")]
    TooManySkipped { skipped: usize, total: usize },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            UnknownTest(_)
            | DescriptorUnavailable { .. }
            | NoSimplifiedVariant(_)
            | InvalidStimulus { .. }
            | DuplicateStimulus { .. }
            | EmptySet { .. }
            | WrongVariant { .. }
            | Parse { .. }
            | Template { .. }
            | InvalidConfig(_)
            | InvalidInput(_)
            | DimMismatch { .. }
            | NonFinite { .. }
            | DuplicateKey { .. }
            | OverlappingSpans
            | Json(_) => 2,
            MissingKey(_) | LevelUnavailable { .. } | Coverage(_) | UnequalContexts(_) => 3,
            ZeroVector
            | DegenerateVariance
            | BudgetExceeded { .. }
            | TooFewSamples { .. }
            | Underflow { .. }
            | TooManySkipped { .. } => 4,
            File { .. } | Io(_) | Csv(_) => 1,
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
