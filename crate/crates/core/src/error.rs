use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error: {msg}")]
pub struct ParseError {
    pub msg: String,
}

impl ParseError {
    pub fn new(msg: impl Into<String>) -> ParseError {
        ParseError { msg: msg.into() }
    }
}

/// Every failure the engine can report. Budget failures are kept apart from
/// verdict failures because the command line maps them to different exit codes.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("supports are not successive: {0}")]
    NonSuccessive(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("schedule exhausted: {0}")]
    ScheduleExhausted(String),
    #[error("budget exceeded after {reached} items (limit {limit})")]
    BudgetExceeded { reached: usize, limit: usize },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("pool exhausted: {0}")]
    PoolExhausted(String),
    #[error("supply exhausted: {0}")]
    SupplyExhausted(String),
    #[error("search failed: {0}")]
    SearchFailed(String),
    #[error("witness failed: {0}")]
    WitnessFailed(String),
    #[error("truncation too tight: {0}")]
    TruncationTooTight(String),
    #[error("delta out of range: {0}")]
    DeltaOutOfRange(String),
    #[error("pattern violation: {0}")]
    PatternViolation(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("io: {0}")]
    Io(String),
    #[error("config: {0}")]
    Config(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::BudgetExceeded { .. }
                | Error::ScheduleExhausted(_)
                | Error::PoolExhausted(_)
                | Error::TruncationTooTight(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
