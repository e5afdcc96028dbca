use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },

    #[error("cannot sample from {0}: total weight is zero")]
    ZeroWeight(&'static str),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sketch has {achieved} numerically nonzero singular values, {requested} requested")]
    RankDeficient { requested: usize, achieved: usize },

    #[error(
        "rejection sampling did not accept within {iterations} iterations \
         (acceptance bound {acceptance_bound:.3e})"
    )]
    RejectionCap {
        iterations: u64,
        acceptance_bound: f64,
    },

    #[error("index sampler produced a zero-probability atom at ({row}, {col})")]
    ZeroProbabilityDraw { row: usize, col: usize },

    #[error("requested {requested} anchors but only {available} distinct indices received votes")]
    VoteShortfall { requested: usize, available: usize },

    #[error("every subproblem was degenerate; nothing to vote on")]
    NoUsableSubproblems,

    #[error("subproblem {index}: {source}")]
    Subproblem {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_subproblem(self, index: usize) -> Self {
        Error::Subproblem {
            index,
            source: Box::new(self),
        }
    }
}
