//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or model parameter violates its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    /// The argument handed to the Gamma m.g.f. lies outside its domain.
    #[error("argument outside the Gamma m.g.f. domain: Re(u) = {re_u} must be < {bound}")]
    MgfDomain { re_u: f64, bound: f64 },

    /// A quadrature routine could not reach the requested tolerance.
    #[error("quadrature did not converge: requested {requested:.3e}, achieved {achieved:.3e}")]
    QuadratureNonConvergence { requested: f64, achieved: f64 },

    /// Numerical differentiation could not stabilise the step size.
    #[error("numerical differentiation failed: requested {requested:.3e}, achieved {achieved:.3e}")]
    StepSizeFailure { requested: f64, achieved: f64 },

    /// A root search could not bracket or locate its target.
    #[error("root bracketing failed on [{lo}, {hi}]: {reason}")]
    BracketFailure { lo: f64, hi: f64, reason: String },

    /// The input sample cannot support the requested estimate.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// The input sample is shorter than the stability floor.
    #[error("sample too short: {len} observations, need at least {min}")]
    SampleTooShort { len: usize, min: usize },

    /// The data covariance is numerically rank deficient.
    #[error("rank-deficient covariance (series `{series}`): {reason}")]
    RankDeficient { series: String, reason: String },

    /// Matrix or vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The portfolio has zero variance and the measure is undefined.
    #[error("portfolio has zero variance for the supplied weights")]
    ZeroVariancePortfolio,

    /// A confidence level is outside the admissible open interval.
    #[error("confidence level {level} outside {context}")]
    InvalidLevel { level: f64, context: &'static str },

    /// Too few tail observations for a historical estimate.
    #[error("insufficient tail observations: {available} rows at level {level}, need {needed}")]
    InsufficientTail {
        available: usize,
        needed: usize,
        level: f64,
    },

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
