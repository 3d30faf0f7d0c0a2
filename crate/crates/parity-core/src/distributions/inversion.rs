//! Distribution function, quantiles and expected shortfall by Fourier
//! inversion of the characteristic function.
//!
//! The distribution function follows the Gil-Pelaez formula
//!
//! ```text
//! F(y) = 1/2 - (1/pi) \int_0^inf Im[ e^{-ity} phi(t) ] / t dt
//! ```
//!
//! The `t = 0` singularity cancels in the symmetric (odd-integrand) form:
//! the integrand tends to `mean - y`. The infinite upper limit is truncated
//! adaptively: integration proceeds over doubling segments until either
//! `|phi(t)| < 1e-12` or a conservative power-law tail bound falls below
//! the tolerance budget.

use num_complex::Complex64;

use super::{central_moments, log_cf, MixedTSParams};
use crate::error::{Error, Result};
use crate::math::quad;

/// Target absolute tolerance of the inversion integrals.
const INVERSION_TOL: f64 = 1e-8;
/// Hard truncation threshold on the characteristic function modulus.
const PHI_CUTOFF: f64 = 1e-12;
/// Segment budget for the adaptive quadrature of one segment.
const SEGMENT_BUDGET: usize = 4096;
/// Upper bound on segment doublings (the first segment is `8 / stdev` wide).
const MAX_DOUBLINGS: usize = 28;

struct InversionContext {
    params: MixedTSParams,
    mean: f64,
    stdev: f64,
}

impl InversionContext {
    fn new(params: &MixedTSParams) -> Result<Self> {
        let m = central_moments(params)?;
        Ok(Self {
            params: *params,
            mean: m.mean,
            stdev: m.variance.sqrt(),
        })
    }

    fn phi(&self, t: f64) -> Complex64 {
        log_cf(t, &self.params)
            .expect("real arguments stay inside the m.g.f. domain")
            .exp()
    }
}

/// Integrate `f` over doubling segments `[0, w], [w, 2w], ...` until the
/// remaining tail (bounded through the local power-law decay of `|phi|`)
/// drops below the budget. Returns the integral and the achieved error.
fn integrate_tail_bounded<F: Fn(f64, Complex64) -> f64>(
    ctx: &InversionContext,
    f: F,
    tail_weight: impl Fn(f64, f64) -> f64,
) -> (f64, f64) {
    let width0 = 8.0 / ctx.stdev.max(1e-12);
    let seg_tol = INVERSION_TOL / 16.0;

    let mut total = 0.0;
    let mut quad_err = 0.0;
    let mut lo = 0.0;
    let mut hi = width0;

    for _ in 0..MAX_DOUBLINGS {
        let r = quad::adaptive(
            |t| f(t, ctx.phi(t)),
            lo,
            hi,
            seg_tol,
            SEGMENT_BUDGET,
        );
        total += r.value;
        quad_err += r.error;

        let phi_hi = ctx.phi(hi).norm();
        let phi_mid = ctx.phi(0.5 * (lo + hi)).norm();
        // Local decay exponent of |phi| ~ t^-p over the last segment.
        let p = if phi_hi > 0.0 && phi_mid > phi_hi {
            ((phi_mid / phi_hi).ln() / (hi / (0.5 * (lo + hi))).ln()).max(0.05)
        } else {
            0.05
        };
        let tail = tail_weight(hi, p) * phi_hi;

        if phi_hi < PHI_CUTOFF || tail < INVERSION_TOL / 2.0 {
            return (total, quad_err + tail);
        }
        lo = hi;
        hi *= 2.0;
    }

    // Budget exhausted: report with the last tail bound folded in.
    let phi_hi = ctx.phi(lo).norm();
    (total, quad_err + tail_weight(lo, 0.05) * phi_hi)
}

fn cdf_in_context(ctx: &InversionContext, y: f64) -> Result<f64> {
    let limit_at_zero = ctx.mean - y;
    let (integral, err) = integrate_tail_bounded(
        ctx,
        |t, phi| {
            if t.abs() < 1e-300 {
                limit_at_zero
            } else {
                ((Complex64::new(0.0, -t * y)).exp() * phi).im / t
            }
        },
        // |integrand| <= |phi(t)| / t, so the tail beyond T is bounded by
        // |phi(T)| / (pi p) under local t^-p decay.
        |_t_end, p| 1.0 / (std::f64::consts::PI * p),
    );

    if err > INVERSION_TOL * 10.0 {
        return Err(Error::QuadratureNonConvergence {
            requested: INVERSION_TOL,
            achieved: err,
        });
    }
    Ok((0.5 - integral / std::f64::consts::PI).clamp(0.0, 1.0))
}

/// Distribution function of the MixedTS law by Gil-Pelaez inversion.
///
/// The result is clamped to `[0, 1]`; non-convergence of the truncated
/// quadrature is reported with the achieved tolerance.
pub fn cdf(y: f64, params: &MixedTSParams) -> Result<f64> {
    params.validate()?;
    let ctx = InversionContext::new(params)?;
    cdf_in_context(&ctx, y)
}

/// Value at Risk at `alpha_level`, reported as a positive loss:
/// `-F^{-1}(alpha_level)` found by bracketed root search on the
/// distribution function over `mean +- 15 stdev`.
pub fn var_alpha(alpha_level: f64, params: &MixedTSParams) -> Result<f64> {
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        return Err(Error::InvalidLevel {
            level: alpha_level,
            context: "(0, 1) for VaR",
        });
    }
    params.validate()?;
    let ctx = InversionContext::new(params)?;
    let lo = ctx.mean - 15.0 * ctx.stdev;
    let hi = ctx.mean + 15.0 * ctx.stdev;
    let quantile = crate::math::roots::brent(
        |y| Ok(cdf_in_context(&ctx, y)? - alpha_level),
        lo,
        hi,
        1e-8,
        1e-12 * ctx.stdev,
        200,
    )?;
    Ok(-quantile)
}

/// Expected shortfall at `alpha_level` as a positive loss:
///
/// ```text
/// ES = -( y_a - (1/alpha) \int_{-inf}^{y_a} F(u) du ),   y_a = -VaR(alpha)
/// ```
///
/// The integral of the distribution function is evaluated through a single
/// Fourier integral obtained by integrating the Gil-Pelaez representation
/// in `y`, which decays one power of `t` faster than the CDF integrand.
pub fn es_alpha(alpha_level: f64, params: &MixedTSParams) -> Result<f64> {
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        return Err(Error::InvalidLevel {
            level: alpha_level,
            context: "(0, 1) for ES",
        });
    }
    params.validate()?;
    let ctx = InversionContext::new(params)?;
    let y_a = -var_alpha(alpha_level, params)?;

    // Effective lower limit: far enough out that F is numerically zero.
    let kurt = central_moments(params)?.kurt;
    let mut k_sigma = (6.0 * (kurt + 3.0).sqrt()).max(20.0);
    let mut lo = ctx.mean - k_sigma * ctx.stdev;
    for _ in 0..6 {
        if cdf_in_context(&ctx, lo)? < 1e-10 {
            break;
        }
        k_sigma *= 1.5;
        lo = ctx.mean - k_sigma * ctx.stdev;
    }

    // \int_lo^y F(u) du = (y - lo)/2 - (1/pi) \int_0^inf Im[ phi(t)
    //   (e^{-it lo} - e^{-it y}) / (i t^2) ] dt
    let limit_at_zero = (y_a - lo) * (ctx.mean - (y_a + lo) / 2.0);
    let (integral, err) = integrate_tail_bounded(
        &ctx,
        |t, phi| {
            if t.abs() < 1e-12 {
                limit_at_zero
            } else {
                let num = phi
                    * ((Complex64::new(0.0, -t * lo)).exp()
                        - (Complex64::new(0.0, -t * y_a)).exp());
                (num / Complex64::new(0.0, t * t)).im
            }
        },
        // Integrand bounded by 2 |phi(t)| / t^2.
        |t_end, p| 2.0 / (std::f64::consts::PI * (1.0 + p) * t_end),
    );
    if err > INVERSION_TOL * 100.0 {
        return Err(Error::QuadratureNonConvergence {
            requested: INVERSION_TOL,
            achieved: err,
        });
    }

    let int_f = (y_a - lo) / 2.0 - integral / std::f64::consts::PI;
    Ok(-(y_a - int_f / alpha_level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::normal;
    use approx::assert_relative_eq;

    fn symmetric_params() -> MixedTSParams {
        MixedTSParams::new(0.0, 0.0, 0.8, 2.0, 1.5, 1.6, 1.6).unwrap()
    }

    fn col_i() -> MixedTSParams {
        MixedTSParams::new(0.0989, -0.0719, 0.6847, 2.1983, 0.8740, 1.1631, 1.2186).unwrap()
    }

    fn vg_params() -> MixedTSParams {
        MixedTSParams::new(0.05, -0.25, 0.6, 2.5, 2.0, 1.3, 2.1).unwrap()
    }

    /// Variance Gamma distribution function computed without the CF: a
    /// single quadrature over the Gamma mixing density,
    /// `F(y) = \int_0^inf Phi((y - mu0 - mu v)/sqrt(v)) Gamma(v; a, sigma^2) dv`.
    fn vg_cdf_oracle(y: f64, p: &MixedTSParams) -> f64 {
        assert_eq!(p.alpha, 2.0);
        let s2 = p.sigma * p.sigma;
        let norm = statrs::function::gamma::gamma(p.a) * s2.powf(p.a);
        let r = quad::adaptive(
            |v: f64| {
                if v <= 0.0 {
                    return 0.0;
                }
                let dens = v.powf(p.a - 1.0) * (-v / s2).exp() / norm;
                normal::cdf((y - p.mu0 - p.mu * v) / v.sqrt()) * dens
            },
            1e-12,
            60.0 * s2 * p.a.max(1.0),
            1e-11,
            6000,
        );
        assert!(r.converged, "oracle quadrature must converge");
        r.value
    }

    #[test]
    fn symmetric_cdf_at_zero_is_half() {
        let f = cdf(0.0, &symmetric_params()).unwrap();
        assert_relative_eq!(f, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn far_left_tail_is_negligible() {
        let p = col_i();
        let m = central_moments(&p).unwrap();
        let y = m.mean - 20.0 * m.variance.sqrt();
        assert!(cdf(y, &p).unwrap() < 1e-6);
    }

    #[test]
    fn cdf_matches_variance_gamma_oracle() {
        let p = vg_params();
        let m = central_moments(&p).unwrap();
        let s = m.variance.sqrt();
        for &y in &[m.mean - 2.0 * s, m.mean - 0.5 * s, m.mean, m.mean + 1.5 * s] {
            let got = cdf(y, &p).unwrap();
            let want = vg_cdf_oracle(y, &p);
            assert!(
                (got - want).abs() < 1e-6,
                "y = {y}: inversion {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn cdf_is_nondecreasing_on_grid() {
        for p in [symmetric_params(), col_i(), vg_params()] {
            let m = central_moments(&p).unwrap();
            let s = m.variance.sqrt();
            let mut last = -1.0;
            for k in 0..=24 {
                let y = m.mean + s * (-6.0 + 0.5 * k as f64);
                let f = cdf(y, &p).unwrap();
                assert!(
                    f >= last - 1e-8,
                    "cdf decreased at y = {y}: {f} < {last}"
                );
                last = f;
            }
        }
    }

    #[test]
    fn var_roundtrip_through_cdf() {
        let p = col_i();
        for &level in &[0.01, 0.05, 0.25] {
            let v = var_alpha(level, &p).unwrap();
            let f = cdf(-v, &p).unwrap();
            assert!(
                (f - level).abs() < 1e-6,
                "level {level}: cdf(-VaR) = {f}"
            );
        }
    }

    #[test]
    fn symmetric_median_var_is_zero() {
        let v = var_alpha(0.5, &symmetric_params()).unwrap();
        assert!(v.abs() < 1e-6, "got {v}");
    }

    #[test]
    fn var_is_monotone_in_level() {
        let p = col_i();
        let v01 = var_alpha(0.01, &p).unwrap();
        let v05 = var_alpha(0.05, &p).unwrap();
        assert!(v01 > v05, "VaR(0.01) = {v01} must exceed VaR(0.05) = {v05}");
    }

    #[test]
    fn es_dominates_var() {
        let p = col_i();
        for &level in &[0.01, 0.05, 0.1] {
            let es = es_alpha(level, &p).unwrap();
            let var = var_alpha(level, &p).unwrap();
            assert!(es >= var, "level {level}: ES {es} < VaR {var}");
        }
    }

    #[test]
    fn gaussian_limit_expected_shortfall() {
        // alpha = 2, sigma = 1/sqrt(a), large a: the law tends to N(0, 1)
        // whose ES(0.05) = pdf(z_{0.05}) / 0.05 ~ 2.0627.
        let a = 1e6_f64;
        let p = MixedTSParams::new(0.0, 0.0, 1.0 / a.sqrt(), a, 2.0, 1.5, 1.5).unwrap();
        let es = es_alpha(0.05, &p).unwrap();
        let expected = normal::pdf(normal::quantile(0.05)) / 0.05;
        assert_relative_eq!(es, expected, epsilon = 1e-4);
    }

    #[test]
    fn median_es_matches_tail_quadrature() {
        // Symmetric zero-mean case at alpha = 0.5: ES = -E[Y | Y <= 0],
        // cross-checked by direct quadrature of the conditional mean
        // through the Gamma mixture (alpha = 2 so the oracle is closed).
        let p = MixedTSParams::new(0.0, 0.0, 0.8, 2.0, 2.0, 1.6, 1.6).unwrap();
        let es = es_alpha(0.5, &p).unwrap();

        // E[Y 1_{Y <= 0}] = \int_0^inf E[sqrt(v) Z 1_{Z <= 0}] g(v) dv
        //                 = -\int_0^inf sqrt(v) pdf(0) g(v) dv
        let s2 = p.sigma * p.sigma;
        let norm = statrs::function::gamma::gamma(p.a) * s2.powf(p.a);
        let r = quad::adaptive(
            |v: f64| {
                if v <= 0.0 {
                    return 0.0;
                }
                let dens = v.powf(p.a - 1.0) * (-v / s2).exp() / norm;
                -v.sqrt() * normal::pdf(0.0) * dens
            },
            1e-12,
            80.0,
            1e-12,
            4000,
        );
        assert!(r.converged);
        let expected = -r.value / 0.5; // -E[Y | Y <= 0] with P = 0.5
        assert_relative_eq!(es, expected, epsilon = 1e-5);
    }

    #[test]
    fn invalid_levels_are_rejected() {
        let p = col_i();
        assert!(var_alpha(0.0, &p).is_err());
        assert!(var_alpha(1.0, &p).is_err());
        assert!(es_alpha(-0.1, &p).is_err());
    }
}
