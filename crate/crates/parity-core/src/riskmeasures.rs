//! Homogeneous risk measures and their Euler decompositions.
//!
//! For a positively homogeneous risk measure `R`, Euler's theorem splits
//! the total into additive factor contributions
//! `R = sum_i beta_i dR/dbeta_i`. This module provides:
//!
//! - volatility with its closed-form contribution `beta_i (Sigma b)_i / sqrt(b'Sigma b)`,
//! - modified (Cornish-Fisher) VaR and modified (Edgeworth) ES with fully
//!   analytic gradients through the portfolio moments,
//! - the historical sorted-matrix decomposition of VaR and ES,
//! - the robust (inner-trimmed) empirical expected shortfall.
//!
//! All risk totals are positive-loss numbers; returns are log returns.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::comoments::{portfolio_moments, CoMomentSet, PortfolioMoments};
use crate::error::{Error, Result};
use crate::math::normal;

/// Risk measure tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    /// Portfolio volatility `sqrt(beta' Sigma beta)`.
    #[serde(rename = "volatility")]
    Volatility,
    /// Cornish-Fisher modified Value at Risk.
    #[serde(rename = "mVaR")]
    ModifiedVaR,
    /// Edgeworth modified Expected Shortfall.
    #[serde(rename = "mES")]
    ModifiedEs,
    /// Historical Value at Risk from the sorted return matrix.
    #[serde(rename = "histVaR")]
    HistoricalVaR,
    /// Historical Expected Shortfall from the sorted return matrix.
    #[serde(rename = "histES")]
    HistoricalEs,
}

impl Measure {
    /// True for the analytic (co-moment based) measures.
    pub fn is_parametric(self) -> bool {
        matches!(
            self,
            Measure::Volatility | Measure::ModifiedVaR | Measure::ModifiedEs
        )
    }
}

/// A risk total with its Euler decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskReport {
    /// Measure evaluated.
    pub measure: Measure,
    /// Confidence level, absent for volatility.
    pub level: Option<f64>,
    /// Total risk (positive loss).
    pub total: f64,
    /// Total risk contributions, `trc_i = beta_i * mrc_i`.
    pub trc: Vec<f64>,
    /// Marginal risk contributions `dR/dbeta_i`.
    pub mrc: Vec<f64>,
    /// `|total - sum trc|`.
    pub euler_residual: f64,
    /// Validity warnings (expansion used outside its comfort zone).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RiskReport {
    fn from_parts(
        measure: Measure,
        level: Option<f64>,
        total: f64,
        mrc: DVector<f64>,
        beta: &DVector<f64>,
    ) -> Self {
        let trc: Vec<f64> = beta.iter().zip(mrc.iter()).map(|(b, m)| b * m).collect();
        let euler_residual = (total - trc.iter().sum::<f64>()).abs();
        Self {
            measure,
            level,
            total,
            trc,
            mrc: mrc.iter().copied().collect(),
            euler_residual,
            warnings: Vec::new(),
        }
    }
}

fn check_level(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidLevel {
            level: alpha,
            context: "(0, 0.5) for tail risk measures",
        });
    }
    Ok(alpha)
}

/// Volatility total and Euler decomposition:
/// `total = sqrt(beta' Sigma beta)`, `mrc_i = (Sigma beta)_i / total`.
pub fn trc_volatility(com: &CoMomentSet, beta: &DVector<f64>) -> Result<RiskReport> {
    let sigma_beta = &com.sigma * beta;
    let m2 = beta.dot(&sigma_beta);
    if m2 <= 0.0 {
        return Err(Error::ZeroVariancePortfolio);
    }
    let total = m2.sqrt();
    let mrc = sigma_beta / total;
    Ok(RiskReport::from_parts(
        Measure::Volatility,
        None,
        total,
        mrc,
        beta,
    ))
}

/// Cornish-Fisher correction polynomial:
///
/// ```text
/// C(z, s, k) = -(1/6)(z^2 - 1) s - (1/24)(z^3 - 3z) k + (1/36)(2z^3 - 5z) s^2
/// ```
pub fn cornish_fisher_correction(z: f64, skew: f64, kurt: f64) -> f64 {
    -(z * z - 1.0) * skew / 6.0 - (z * z * z - 3.0 * z) * kurt / 24.0
        + (2.0 * z * z * z - 5.0 * z) * skew * skew / 36.0
}

/// Second-order (Cornish-Fisher) quantile `g = z - C(z, s, k)`, the value
/// whose negative pairs with the modified VaR total
/// `-beta'mu - sqrt(m2) z + sqrt(m2) C = -(beta'mu + sqrt(m2) g)`.
fn cornish_fisher_quantile(z: f64, skew: f64, kurt: f64) -> f64 {
    z - cornish_fisher_correction(z, skew, kurt)
}

/// Lower-tail moments of the standard normal:
/// `I^q(g) = \int_{-inf}^g z^q pdf(z) dz` through the recursion
/// `I^0 = Phi(g)`, `I^1 = -pdf(g)`, `I^q = -g^{q-1} pdf(g) + (q-1) I^{q-2}`.
///
/// Supported (and tested) for `q <= 6`; the recursion itself is valid for
/// any order.
pub fn edgeworth_tail_integrals(g: f64, q: u32) -> f64 {
    lower_tail_moment(g, q)
}

fn lower_tail_moment(g: f64, q: u32) -> f64 {
    match q {
        0 => normal::cdf(g),
        1 => -normal::pdf(g),
        _ => -g.powi(q as i32 - 1) * normal::pdf(g) + (q as f64 - 1.0) * lower_tail_moment(g, q - 2),
    }
}

/// Mean-and-moment bundle shared by the parametric tail measures.
struct Profile {
    pm: PortfolioMoments,
    mu_p: f64,
    s2: f64,
    grad_skew: DVector<f64>,
    grad_kurt: DVector<f64>,
}

fn profile(com: &CoMomentSet, beta: &DVector<f64>) -> Result<Profile> {
    let pm = portfolio_moments(com, beta)?;
    let mu_p = com.mean.dot(beta);
    let s2 = pm.m2.sqrt();
    // skew = m3 m2^{-3/2}; kurt = m4 m2^{-2} - 3
    let grad_skew = &pm.grad_m3 / pm.m2.powf(1.5)
        - &pm.grad_m2 * (1.5 * pm.m3 / pm.m2.powf(2.5));
    let grad_kurt = &pm.grad_m4 / (pm.m2 * pm.m2)
        - &pm.grad_m2 * (2.0 * pm.m4 / pm.m2.powi(3));
    Ok(Profile {
        pm,
        mu_p,
        s2,
        grad_skew,
        grad_kurt,
    })
}

fn edgeworth_domain_warnings(skew: f64, kurt: f64) -> Vec<String> {
    let mut w = Vec::new();
    if kurt > 8.0 || skew.abs() > 2.0 {
        w.push(format!(
            "Edgeworth/Cornish-Fisher expansion outside its validity domain (skew {skew:.3}, excess kurtosis {kurt:.3})"
        ));
    }
    w
}

/// Modified Value at Risk with analytic Euler decomposition:
///
/// ```text
/// mVaR = -beta'mu - sqrt(m2) z_a + sqrt(m2) C(z_a, skew, kurt)
/// ```
pub fn modified_var(
    com: &CoMomentSet,
    beta: &DVector<f64>,
    alpha_level: f64,
) -> Result<RiskReport> {
    let alpha = check_level(alpha_level)?;
    let p = profile(com, beta)?;
    let z = normal::quantile(alpha);
    let c = cornish_fisher_correction(z, p.pm.skew, p.pm.kurt);
    let total = -p.mu_p - p.s2 * z + p.s2 * c;

    // dC through skew and kurt.
    let dc_ds = -(z * z - 1.0) / 6.0 + (2.0 * z * z * z - 5.0 * z) * p.pm.skew / 18.0;
    let dc_dk = -(z * z * z - 3.0 * z) / 24.0;
    let ds2 = &p.pm.grad_m2 / (2.0 * p.s2);
    let mrc = -&com.mean + &ds2 * (c - z)
        + (&p.grad_skew * dc_ds + &p.grad_kurt * dc_dk) * p.s2;

    let mut report = RiskReport::from_parts(
        Measure::ModifiedVaR,
        Some(alpha),
        total,
        mrc,
        beta,
    );
    report.warnings = edgeworth_domain_warnings(p.pm.skew, p.pm.kurt);
    Ok(report)
}

/// Ingredients of the Edgeworth tail expectation at quantile `g`:
/// `E_alpha = \int_{-inf}^g z f_G2(z) dz` where `f_G2` is the second-order
/// Edgeworth density. Expanding `z He_n(z)` in the lower-tail moments:
///
/// ```text
/// E_alpha = I1 + (s/6)(I4 - 3 I2) + (k/24)(I5 - 6 I3 + 3 I1)
///         + (s^2/72)(I7 - 15 I5 + 45 I3 - 15 I1)
/// ```
struct EdgeworthTail {
    e_alpha: f64,
    de_dg: f64,
    de_ds: f64,
    de_dk: f64,
}

fn edgeworth_tail(g: f64, skew: f64, kurt: f64) -> EdgeworthTail {
    let i: Vec<f64> = (0..=7).map(|q| lower_tail_moment(g, q)).collect();
    let skew_comb = i[4] - 3.0 * i[2];
    let kurt_comb = i[5] - 6.0 * i[3] + 3.0 * i[1];
    let skew2_comb = i[7] - 15.0 * i[5] + 45.0 * i[3] - 15.0 * i[1];

    let e_alpha = i[1]
        + skew / 6.0 * skew_comb
        + kurt / 24.0 * kurt_comb
        + skew * skew / 72.0 * skew2_comb;

    // d/dg of I^q is g^q pdf(g); the combinations reassemble into
    // g * He_n(g) * pdf(g), i.e. the Edgeworth density times g.
    let he3 = g * g * g - 3.0 * g;
    let he4 = g.powi(4) - 6.0 * g * g + 3.0;
    let he6 = g.powi(6) - 15.0 * g.powi(4) + 45.0 * g * g - 15.0;
    let de_dg = g
        * normal::pdf(g)
        * (1.0 + skew / 6.0 * he3 + kurt / 24.0 * he4 + skew * skew / 72.0 * he6);

    EdgeworthTail {
        e_alpha,
        de_dg,
        de_ds: skew_comb / 6.0 + skew / 36.0 * skew2_comb,
        de_dk: kurt_comb / 24.0,
    }
}

/// Modified Expected Shortfall:
///
/// ```text
/// mES = -beta'mu - sqrt(m2) E_G2[ z | z <= g_a ],   g_a = z_a - C(z_a, s, k)
/// ```
///
/// with the conditional expectation assembled from the lower-tail normal
/// moments. A total below the matching modified VaR signals the expansion
/// leaving its validity domain and is reported as a warning, not an error.
pub fn modified_es(com: &CoMomentSet, beta: &DVector<f64>, alpha_level: f64) -> Result<RiskReport> {
    let alpha = check_level(alpha_level)?;
    let p = profile(com, beta)?;
    let z = normal::quantile(alpha);
    let g = cornish_fisher_quantile(z, p.pm.skew, p.pm.kurt);
    let tail = edgeworth_tail(g, p.pm.skew, p.pm.kurt);

    // E_G2[z | z <= g] = E_alpha / alpha  (a negative quantity).
    let cond = tail.e_alpha / alpha;
    let total = -p.mu_p - p.s2 * cond;

    // Chain rule: g depends on beta through skew and kurt.
    let dg_ds = (z * z - 1.0) / 6.0 - (2.0 * z * z * z - 5.0 * z) * p.pm.skew / 18.0;
    let dg_dk = (z * z * z - 3.0 * z) / 24.0;
    let dcond_i = (&p.grad_skew * (tail.de_dg * dg_ds + tail.de_ds)
        + &p.grad_kurt * (tail.de_dg * dg_dk + tail.de_dk))
        / alpha;
    let ds2 = &p.pm.grad_m2 / (2.0 * p.s2);
    let mrc = -&com.mean - &ds2 * cond - dcond_i * p.s2;

    let mut report = RiskReport::from_parts(Measure::ModifiedEs, Some(alpha), total, mrc, beta);
    report.warnings = edgeworth_domain_warnings(p.pm.skew, p.pm.kurt);

    let mvar = modified_var(com, beta, alpha)?;
    if report.total < mvar.total {
        report.warnings.push(format!(
            "modified ES {:.6e} below modified VaR {:.6e}: Edgeworth expansion unreliable here",
            report.total, mvar.total
        ));
    }
    Ok(report)
}

/// Historical VaR/ES decomposition from the sorted return matrix.
///
/// Rows are sorted by the portfolio column. For VaR, contributions average
/// factor values over a 5-row window around the quantile row (the
/// conditional expectation at a single row is degenerate for continuous
/// data); for ES they average over the tail rows at or below the VaR
/// cutoff. Totals apply the same estimator to the portfolio column, so a
/// single-factor portfolio decomposes exactly; when the portfolio column
/// is not the exact weighted factor sum (an externally tracked fund, say)
/// the Euler residual measures that gap.
pub fn historical_decomposition(
    portfolio: &[f64],
    factors: &nalgebra::DMatrix<f64>,
    beta: &DVector<f64>,
    alpha_level: f64,
    measure: Measure,
) -> Result<RiskReport> {
    if !matches!(measure, Measure::HistoricalVaR | Measure::HistoricalEs) {
        return Err(Error::InvalidParam {
            name: "measure",
            reason: "historical decomposition supports histVaR and histES only".into(),
        });
    }
    let alpha = check_level(alpha_level)?;
    let t = portfolio.len();
    let n = factors.nrows();
    if factors.ncols() != t {
        return Err(Error::DimensionMismatch(format!(
            "portfolio has {t} rows, factor matrix {}",
            factors.ncols()
        )));
    }
    if beta.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries for {n} factors",
            beta.len()
        )));
    }
    if (t as f64) < 1.0 / alpha {
        return Err(Error::InsufficientTail {
            available: t,
            needed: (1.0 / alpha).ceil() as usize,
            level: alpha,
        });
    }

    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| portfolio[a].partial_cmp(&portfolio[b]).unwrap());

    let q_idx = ((alpha * t as f64).floor() as usize).min(t - 1);

    let rows: Vec<usize> = match measure {
        Measure::HistoricalVaR => {
            // 5-row window around the quantile row.
            if q_idx < 2 || q_idx + 2 >= t {
                return Err(Error::InsufficientTail {
                    available: q_idx.min(t - 1 - q_idx),
                    needed: 2,
                    level: alpha,
                });
            }
            order[q_idx - 2..=q_idx + 2].to_vec()
        }
        Measure::HistoricalEs => {
            // Tail at or below the VaR cutoff: the worst floor(alpha T)
            // rows of the sorted matrix, matching the plain empirical ES.
            let tail = order[..q_idx].to_vec();
            if tail.len() < 5 {
                return Err(Error::InsufficientTail {
                    available: tail.len(),
                    needed: 5,
                    level: alpha,
                });
            }
            tail
        }
        _ => unreachable!(),
    };

    let count = rows.len() as f64;
    let total = -rows.iter().map(|&r| portfolio[r]).sum::<f64>() / count;
    let mrc = DVector::from_fn(n, |i, _| {
        -rows.iter().map(|&r| factors[(i, r)]).sum::<f64>() / count
    });
    Ok(RiskReport::from_parts(measure, Some(alpha), total, mrc, beta))
}

/// Plain empirical Value at Risk: `-(order statistic at floor(alpha T))`.
pub fn empirical_var(sample: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel {
            level: alpha,
            context: "(0, 1) for empirical VaR",
        });
    }
    if sample.is_empty() {
        return Err(Error::DegenerateSample("empty sample".into()));
    }
    let mut sorted: Vec<f64> = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((alpha * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    Ok(-sorted[idx])
}

/// Plain empirical Expected Shortfall: mean of the worst `floor(alpha T)`
/// observations, as a positive loss.
pub fn empirical_es(sample: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel {
            level: alpha,
            context: "(0, 1) for empirical ES",
        });
    }
    let mut sorted: Vec<f64> = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = (alpha * sorted.len() as f64).floor() as usize;
    if k == 0 {
        return Err(Error::InsufficientTail {
            available: 0,
            needed: 1,
            level: alpha,
        });
    }
    Ok(-sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Robust (inner-trimmed) empirical expected shortfall:
///
/// ```text
/// ES_robust = (1/(a2 - a1)) \int_{a1}^{a2} VaR_u du
/// ```
///
/// approximated by the trimmed mean of the order statistics between the
/// two empirical quantiles. Observations below the `a1` quantile never
/// enter the average.
pub fn empirical_robust_es(sample: &[f64], alpha1: f64, alpha2: f64) -> Result<f64> {
    if !(alpha1 >= 0.0 && alpha1 < alpha2 && alpha2 < 1.0) {
        return Err(Error::InvalidLevel {
            level: alpha1,
            context: "0 <= alpha1 < alpha2 < 1 for robust ES",
        });
    }
    let mut sorted: Vec<f64> = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let t = sorted.len() as f64;
    let i1 = (alpha1 * t).floor() as usize;
    let i2 = (alpha2 * t).floor() as usize;
    if i2 <= i1 {
        return Err(Error::InsufficientTail {
            available: 0,
            needed: 1,
            level: alpha2,
        });
    }
    Ok(-sorted[i1..i2].iter().sum::<f64>() / (i2 - i1) as f64)
}
