//! Brent-style bracketed root finding.

use crate::error::{Error, Result};

/// Find a root of `f` on `[lo, hi]` by Brent's method.
///
/// The bracket must straddle the root: `f(lo)` and `f(hi)` must have
/// opposite signs. Iteration stops when `|f| < ftol` or the bracket
/// shrinks below `xtol`.
pub fn brent<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    lo: f64,
    hi: f64,
    ftol: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a)?;
    let mut fb = f(b)?;

    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::BracketFailure {
            lo,
            hi,
            reason: format!("f(lo) = {fa:.6e} and f(hi) = {fb:.6e} have the same sign"),
        });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;

    for _ in 0..max_iter {
        if fb.abs() > fc.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }

        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);

        if xm.abs() <= tol1 || fb.abs() < ftol {
            return Ok(b);
        }

        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Inverse quadratic interpolation, falling back to secant.
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * xm * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }

        a = b;
        fa = fb;
        b += if d.abs() > tol1 {
            d
        } else {
            tol1.copysign(xm)
        };
        fb = f(b)?;
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }

    Err(Error::BracketFailure {
        lo,
        hi,
        reason: format!("no convergence after {max_iter} iterations, last residual {fb:.3e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cosine_root() {
        let root = brent(|x| Ok(x.cos()), 0.0, 3.0, 1e-14, 1e-14, 100).unwrap();
        assert!((root - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn rejects_unbracketed_interval() {
        let err = brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, 1e-12, 100).unwrap_err();
        assert!(matches!(err, Error::BracketFailure { .. }));
    }
}
