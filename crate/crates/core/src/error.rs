use thiserror::Error;

/// Errors produced by the market, solver and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("variable x{index} out of range (utility has {dim} goods)")]
    VariableOutOfRange { index: usize, dim: usize },

    #[error("exponent at position {pos} must be a numeric constant")]
    NonConstantExponent { pos: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("utility evaluated to a non-finite value at {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("gradient diverges at {point:?} (coordinate {coord})")]
    GradientDiverges { point: Vec<f64>, coord: usize },

    #[error("rate undefined for buyer {buyer}: {reason}")]
    RateUndefined { buyer: usize, reason: String },

    #[error("objective is -inf: buyer {buyer} has zero utility on the feasible region")]
    ZeroUtility { buyer: usize },

    #[error("no sign change of U(r) - m*r in [{lo:e}, {hi:e}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("grid of {points:e} points exceeds guard {guard:e}")]
    GuardExceeded { points: f64, guard: f64 },

    #[error("no supporting hyperplane at target (best violation {violation:e} > slack {slack:e})")]
    NoSupportingHyperplane { violation: f64, slack: f64 },

    #[error("target utilities are not Pareto optimal")]
    NotParetoOptimal,
}

pub type Result<T> = std::result::Result<T, Error>;
