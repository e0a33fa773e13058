use thiserror::Error;

use crate::oracle::Certificate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error(
        "no mixture with at most {max_components} components reaches sup-distance \
         {threshold:.3e} (best {best:.3e})"
    )]
    FitFailure {
        max_components: usize,
        threshold: f64,
        best: f64,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("values are not nondecreasing at index {index}")]
    NotMonotone { index: usize },

    #[error("negative copula mass {mass:.3e} in cell ({row}, {col})")]
    NegativeCellMass { row: usize, col: usize, mass: f64 },

    #[error("infeasible start: {0}")]
    InfeasibleStart(String),

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("unknown instrument value {0}")]
    UnknownInstrument(f64),

    #[error("grid [{lo}, {hi}] misses {missing:.3e} of the probability mass")]
    Coverage { lo: f64, hi: f64, missing: f64 },

    #[error("transport problem is infeasible: {0}")]
    Infeasible(Certificate),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
