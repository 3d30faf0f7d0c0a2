//! Parametric risk-parity portfolio construction.
//!
//! The pipeline separates observed factor returns into independent
//! sources (FastICA), models each source with the Mixed Tempered Stable
//! distribution, assembles portfolio covariance / co-skewness /
//! co-kurtosis tensors analytically from the independence structure,
//! evaluates homogeneous risk measures (volatility, modified VaR,
//! modified ES) with exact Euler decompositions, and solves the
//! equal-risk-contribution weighting problem on the simplex. A rolling
//! backtest with concentration (Gini) reporting ties the stages together.
//!
//! Modules:
//! - [`distributions`]: the MixedTS law (characteristic function, moments,
//!   Fourier-inversion CDF/VaR/ES, maximum-likelihood fitting).
//! - [`ica`]: FastICA source separation with deterministic sign and order
//!   normalisation.
//! - [`comoments`]: co-moment tensor assembly and portfolio moments with
//!   analytic gradients.
//! - [`riskmeasures`]: risk totals and total/marginal risk contributions,
//!   parametric and historical.
//! - [`optimizer`]: equal-risk-contribution solver (projected gradient on
//!   the simplex with multi-start).
//! - [`backtest`]: rolling-window out-of-sample evaluation and the Gini
//!   concentration index.

pub mod backtest;
pub mod comoments;
pub mod distributions;
pub mod error;
pub mod ica;
pub mod math;
pub mod optimizer;
pub mod riskmeasures;

pub use error::{Error, Result};
