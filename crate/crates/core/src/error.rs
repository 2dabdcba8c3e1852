use thiserror::Error;

/// Errors produced by the engines and analyses.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter failed validation. `name` is the parameter's key.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("propensity {q} is outside the domain of the probability model ({model})")]
    Domain { q: f64, model: &'static str },

    #[error("entrant count {m} is out of range 0..={n}")]
    EntrantCount { m: usize, n: usize },

    #[error("the kinetic solver requires a logistic probability model")]
    UnsupportedModel,

    #[error("empty grid: {0}")]
    EmptyGrid(String),

    #[error("time step {dt:e} exceeds the stability bound {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("non-finite density encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("exhaustive enumeration is capped at {max} agents, got {n}")]
    TooManyAgents { n: usize, max: usize },

    #[error(transparent)]
    Fit(#[from] FitError),

    #[error("series do not overlap in time")]
    NoOverlap,
}

/// Reasons an exponential-decay fit cannot be produced.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("only {found} points in the fit window, need at least {needed}")]
    InsufficientPoints { found: usize, needed: usize },

    #[error("non-positive gap to the limit at t = {t}; the window extends past convergence")]
    NonPositiveGap { t: f64 },

    #[error("fitted rate {rate} is not positive; the series is not decaying")]
    NotDecaying { rate: f64 },

    #[error("the sorting window never opens: |a - kappa| never fell below {epsilon} of its initial value; run to t_end >= {required_t_end} (3 tau_s)")]
    WindowNeverOpens { epsilon: f64, required_t_end: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
