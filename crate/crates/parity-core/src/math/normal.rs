//! Standard normal density, distribution and quantile helpers.
//!
//! The distribution function goes through `erfc` for full double
//! precision; the quantile polishes a rational-approximation start with
//! Newton steps on that CDF.

use statrs::distribution::{ContinuousCDF, Normal};

const FRAC_1_SQRT_2PI: f64 = 0.3989422804014327;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, `0.5 erfc(-x / sqrt(2))`.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile, polished to machine precision with Newton
/// steps on the distribution function.
pub fn quantile(p: f64) -> f64 {
    let mut z = Normal::new(0.0, 1.0)
        .expect("unit normal parameters are valid")
        .inverse_cdf(p);
    for _ in 0..2 {
        let d = pdf(z);
        if d <= f64::MIN_POSITIVE {
            break;
        }
        z -= (cdf(z) - p) / d;
    }
    z
}
