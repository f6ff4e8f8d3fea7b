use thiserror::Error;

/// Errors surfaced by the solver and certifier APIs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("instance invalid: {0}")]
    InvalidInstance(String),

    #[error("center set must be nonempty")]
    EmptyCenters,

    #[error("enumeration budget exceeded: C({m},{k}) = {subsets} subsets > budget {budget}; shrink the instance or raise the budget")]
    BudgetExceeded {
        m: usize,
        k: usize,
        subsets: u128,
        budget: u128,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unknown case id {0:?} for {1}")]
    UnknownCase(String, &'static str),

    #[error("case {case}: auxiliary parameter out of range: {detail}")]
    AuxOutOfRange { case: String, detail: String },

    #[error("p = {p} outside the proven range [{lo}, {hi}]")]
    POutOfRange { p: f64, lo: f64, hi: f64 },

    #[error("warm start: previous set not independent after retention repair")]
    WarmStartContract,

    #[error(
        "rounding failed to reach |S| <= {k} within the retry budget; best sampled size {best}"
    )]
    RetryExhausted { k: usize, best: usize },

    #[error("client {0} does not match any analysis case")]
    Unclassifiable(usize),

    #[error("no λ on the sweep grid reaches expected size >= k = {0}")]
    SweepFailed(usize),

    #[error("assembly produced no candidate of size <= {0}")]
    AssemblyFailed(usize),

    #[error("simplex did not converge (cycling persists under Bland's rule)")]
    LpCycling,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
