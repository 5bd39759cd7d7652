use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Library-wide error type. Variants carry enough context to name the exact
/// inequality, constraint, or field that failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid loss vector: {0}")]
    InvalidLoss(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        context: String,
        residual: f64,
        iterations: usize,
    },

    #[error("learning-rate sequence condition violated at round {round}: {detail}")]
    SequenceCondition { round: usize, detail: String },

    #[error(
        "bisection bracket has no sign change on [{lo}, {hi}]: F(lo) = {f_lo:.6e}, F(hi) = {f_hi:.6e}"
    )]
    BisectionBracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("per-round history logging is disabled; it is required to compute {0}")]
    HistoryDisabled(&'static str),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("duplicate actions: rows {first} and {second} have identical losses")]
    DuplicateActions { first: usize, second: usize },

    #[error(
        "degenerate game: action {action} has a cell of dimension {dim}, expected {expected} (maximal) or empty"
    )]
    DegenerateGame {
        action: usize,
        dim: i64,
        expected: i64,
    },

    #[error(
        "game is not locally observable: neighbours {first} and {second} admit no pairwise witness (least-squares residual {residual:.3e})"
    )]
    NotLocallyObservable {
        first: usize,
        second: usize,
        residual: f64,
    },

    #[error("config error in `{field}`: {detail}")]
    Config { field: String, detail: String },

    #[error("trace error: {0}")]
    Trace(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            detail: detail.into(),
        }
    }
}
