use std::path::PathBuf;

use crate::agents::SearchHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unparseable temporal reference: {0:?}")]
    UnparseableTemporalReference(String),

    #[error("rationale is empty")]
    EmptyRationale,

    #[error("language model protocol error: {0}")]
    LlmProtocol(String),

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("{n} claims exceed the exact-enumeration threshold of {threshold}")]
    TooManyClaims { n: usize, threshold: usize },

    #[error("coalition evaluator failed: {0}")]
    Evaluator(String),

    #[error("regression characteristic requires a position-median baseline")]
    MissingBaseline,

    #[error("shapley estimates and verdicts cover different claim sets")]
    ClaimSetMismatch,

    #[error("probability {0} outside [0, 1]")]
    OutOfRangeProbability(f64),

    #[error("ground truth must be positive, got {0}")]
    NonpositiveGroundTruth(f64),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("original value at index {0} is zero")]
    ZeroOriginal(usize),

    #[error("cannot build a report from an empty audit set")]
    EmptyAuditSet,

    #[error("search backend error: {0}")]
    SearchBackend(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("rate limited after {attempts} attempts")]
    RateLimit { attempts: u32 },

    #[error("no draft prediction after {iterations} tool iterations")]
    ToolLoopExhausted {
        iterations: usize,
        history: Box<SearchHistory>,
    },

    #[error("closed-world violation: aggregator prompt contains violated claim {0:?}")]
    ClosedWorld(String),

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
