use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("conditioning event has probability zero")]
    ZeroProbabilityEvent,

    #[error("not absolutely continuous: {0}")]
    NonAbsolutelyContinuous(String),

    #[error("malformed kernel: {0}")]
    MalformedKernel(String),

    #[error("prefix reachable under the reference input but kernel has no row: {0}")]
    UnreachablePrefix(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("coordinate split is unbalanced: {0}")]
    OddCoordinateCount(String),

    #[error("rectangle structure violated (max deviation {max:e})")]
    RectangleViolation { max: f64 },

    #[error("degenerate conditioning at node `{node}`: {reason}")]
    DegenerateConditioning { node: String, reason: String },

    #[error("coordinate count {0} is not a power of two")]
    NonPowerOfTwo(usize),

    #[error("root disadvantage {0} is not below 1/2")]
    DisadvantageTooLarge(String),

    #[error("no leaf satisfies the selection thresholds; best candidate `{best}`")]
    NoQualifyingLeaf { best: String },

    #[error("majority vote needs an odd copy count, got {0}")]
    EvenT(usize),

    #[error("input marginal is not the required product distribution: {0}")]
    NonProductInput(String),

    #[error("operation would materialize {entries} entries, over the budget of {budget}")]
    EntryBudget { entries: usize, budget: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, Error>;
