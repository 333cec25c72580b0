use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested agent incentive is above `E[max(0, v − E[v])]`, so the
    /// sale probability would exceed one.
    #[error("requested incentive {requested} exceeds the truthfulness threshold {threshold}")]
    ThresholdExceeded { requested: f64, threshold: f64 },

    #[error("invalid mixture weights: {0}")]
    Weight(String),

    #[error("search space of {candidates:.3e} candidates exceeds the budget of {budget}")]
    Size { candidates: f64, budget: u64 },

    #[error("{value} is outside the cost support [{lo}, {hi}] or has zero density")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("virtual cost is not strictly increasing: {0}")]
    Regularity(String),

    #[error("no lattice cdf meets the constraint: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
