use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("probe not admissible on this grid: {0}")]
    InadmissibleProbe(String),

    #[error("symbol evaluation failed at r = {r}: {reason}")]
    SymbolEvaluation { r: f64, reason: String },

    /// `sup_r r^k exp(-F(r))` is infinite: the symbol does not grow fast enough.
    #[error("supremum infinite for k = {k}: objective still increasing at log r = {s_max}")]
    SupremumInfinite { k: usize, s_max: f64 },

    #[error("R = {r} is below the stabilizable regime: alpha_R - inf F = {alpha_tilde} <= 0")]
    BelowStabilizableRegime { r: f64, alpha_tilde: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("bisection bracket not found on [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
