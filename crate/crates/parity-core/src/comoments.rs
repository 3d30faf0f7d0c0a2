//! Factor co-moment tensors from independent sources.
//!
//! Given the mixing matrix `A` and per-source central moments, the factor
//! covariance, co-skewness and co-kurtosis assemble analytically:
//!
//! ```text
//! Sigma_ik   = sum_j a_ij a_kj var_j
//! M3^{ikl}   = sum_j a_ij a_kj a_lj m3_j
//! M4^{iklm}  = sum_j a_ij a_kj a_lj a_mj m4_j          (diagonal part)
//!            + [Sigma_ik Sigma_lm + Sigma_il Sigma_km
//!               + Sigma_im Sigma_kl
//!               - 3 sum_j a_ij a_kj a_lj a_mj var_j^2]  (pair cross terms)
//! ```
//!
//! Independence kills all odd cross moments, so `Sigma` and `M3` are
//! purely diagonal in source space. The fourth-order tensor is not: the
//! pairwise variance products survive. `Mode::PaperDiagonal` keeps only
//! the diagonal sums; `Mode::ExactIndependent` (the default elsewhere)
//! adds the cross-term tensor, which is what a Monte-Carlo co-kurtosis of
//! truly independent sources reproduces.
//!
//! `M3` is stored as `N x N^2` and `M4` as `N x N^3` in Kronecker layout:
//! `M3[i, k*N + l]`, `M4[i, k*N^2 + l*N + m]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::MomentSet;
use crate::error::{Error, Result};
use crate::ica::ICAModel;

/// Co-moment assembly mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Diagonal-only fourth-order tensor.
    PaperDiagonal,
    /// Diagonal plus the pairwise variance cross terms implied by
    /// independence.
    ExactIndependent,
}

/// Factor mean vector and co-moment tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoMomentSet {
    /// Factor means.
    pub mean: DVector<f64>,
    /// Covariance, `N x N`.
    pub sigma: DMatrix<f64>,
    /// Co-skewness in Kronecker layout, `N x N^2`.
    pub m3: DMatrix<f64>,
    /// Co-kurtosis in Kronecker layout, `N x N^3`.
    pub m4: DMatrix<f64>,
    /// Assembly mode used.
    pub mode: Mode,
}

/// Portfolio central moments with their weight gradients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortfolioMoments {
    /// `beta' Sigma beta`.
    pub m2: f64,
    /// `beta' M3 (beta (x) beta)`.
    pub m3: f64,
    /// `beta' M4 (beta (x) beta (x) beta)`.
    pub m4: f64,
    /// `m3 / m2^{3/2}`.
    pub skew: f64,
    /// `m4 / m2^2 - 3`.
    pub kurt: f64,
    /// `2 (Sigma beta)_i`.
    pub grad_m2: DVector<f64>,
    /// `3 [M3 (beta (x) beta)]_i`.
    pub grad_m3: DVector<f64>,
    /// `4 [M4 (beta (x) beta (x) beta)]_i`.
    pub grad_m4: DVector<f64>,
}

impl CoMomentSet {
    /// Dimension of the factor space.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Restrict the co-moments to a subset of factor indices, preserving
    /// order. Used to drop zero-variance factors before optimisation.
    pub fn subset(&self, keep: &[usize]) -> CoMomentSet {
        let n = self.dim();
        let m = keep.len();
        let mean = DVector::from_fn(m, |i, _| self.mean[keep[i]]);
        let sigma = DMatrix::from_fn(m, m, |i, k| self.sigma[(keep[i], keep[k])]);
        let m3 = DMatrix::from_fn(m, m * m, |i, kl| {
            let (k, l) = (kl / m, kl % m);
            self.m3[(keep[i], keep[k] * n + keep[l])]
        });
        let m4 = DMatrix::from_fn(m, m * m * m, |i, klm| {
            let k = klm / (m * m);
            let l = (klm / m) % m;
            let mm = klm % m;
            self.m4[(keep[i], keep[k] * n * n + keep[l] * n + keep[mm])]
        });
        CoMomentSet {
            mean,
            sigma,
            m3,
            m4,
            mode: self.mode,
        }
    }

    /// Serialise to a single JSON document with explicit shapes and
    /// row-major data arrays.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct MatrixView {
            rows: usize,
            cols: usize,
            data: Vec<f64>,
        }
        fn view(m: &DMatrix<f64>) -> MatrixView {
            let mut data = Vec::with_capacity(m.nrows() * m.ncols());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    data.push(m[(i, j)]);
                }
            }
            MatrixView {
                rows: m.nrows(),
                cols: m.ncols(),
                data,
            }
        }
        #[derive(Serialize)]
        struct Doc {
            n: usize,
            mode: Mode,
            mean: Vec<f64>,
            sigma: MatrixView,
            m3: MatrixView,
            m4: MatrixView,
        }
        let doc = Doc {
            n: self.dim(),
            mode: self.mode,
            mean: self.mean.iter().copied().collect(),
            sigma: view(&self.sigma),
            m3: view(&self.m3),
            m4: view(&self.m4),
        };
        serde_json::to_string_pretty(&doc).expect("serialisable document")
    }
}

/// Assemble factor co-moments from a fitted ICA model and per-source
/// moment sets.
pub fn build_comoments(
    model: &ICAModel,
    source_moments: &[MomentSet],
    mode: Mode,
) -> Result<CoMomentSet> {
    let n = model.mixing.nrows();
    if source_moments.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} source moment sets for {n} components",
            source_moments.len()
        )));
    }
    let a = &model.mixing;

    let var: Vec<f64> = source_moments.iter().map(|m| m.variance).collect();
    let m3s: Vec<f64> = source_moments.iter().map(|m| m.m3).collect();
    let m4s: Vec<f64> = source_moments.iter().map(|m| m.m4).collect();

    let src_mean = DVector::from_iterator(n, source_moments.iter().map(|m| m.mean));
    let mean = a * src_mean + &model.whitener.mean;

    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += a[(i, j)] * a[(k, j)] * var[j];
            }
            sigma[(i, k)] = s;
        }
    }

    let mut m3 = DMatrix::zeros(n, n * n);
    for i in 0..n {
        for k in 0..n {
            for l in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += a[(i, j)] * a[(k, j)] * a[(l, j)] * m3s[j];
                }
                m3[(i, k * n + l)] = s;
            }
        }
    }

    let mut m4 = DMatrix::zeros(n, n * n * n);
    for i in 0..n {
        for k in 0..n {
            for l in 0..n {
                for mm in 0..n {
                    let mut diag = 0.0;
                    let mut diag_var2 = 0.0;
                    for j in 0..n {
                        let w = a[(i, j)] * a[(k, j)] * a[(l, j)] * a[(mm, j)];
                        diag += w * m4s[j];
                        diag_var2 += w * var[j] * var[j];
                    }
                    let value = match mode {
                        Mode::PaperDiagonal => diag,
                        Mode::ExactIndependent => {
                            // Pairwise products over j != j' reduce to
                            // covariance products minus their diagonal.
                            diag + sigma[(i, k)] * sigma[(l, mm)]
                                + sigma[(i, l)] * sigma[(k, mm)]
                                + sigma[(i, mm)] * sigma[(k, l)]
                                - 3.0 * diag_var2
                        }
                    };
                    m4[(i, k * n * n + l * n + mm)] = value;
                }
            }
        }
    }

    Ok(CoMomentSet {
        mean,
        sigma,
        m3,
        m4,
        mode,
    })
}

/// Portfolio central moments, skewness/kurtosis and their gradients for
/// exposure vector `beta`.
pub fn portfolio_moments(com: &CoMomentSet, beta: &DVector<f64>) -> Result<PortfolioMoments> {
    let n = com.dim();
    if beta.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries for {n} factors",
            beta.len()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Data("beta contains non-finite entries".into()));
    }

    let sigma_beta = &com.sigma * beta;
    let m2 = beta.dot(&sigma_beta);
    if m2 <= 0.0 {
        return Err(Error::ZeroVariancePortfolio);
    }

    let beta2 = beta.kronecker(beta);
    let beta3 = beta2.kronecker(beta);
    let m3_contracted = &com.m3 * &beta2;
    let m4_contracted = &com.m4 * &beta3;
    let m3 = beta.dot(&m3_contracted);
    let m4 = beta.dot(&m4_contracted);

    Ok(PortfolioMoments {
        m2,
        m3,
        m4,
        skew: m3 / m2.powf(1.5),
        kurt: m4 / (m2 * m2) - 3.0,
        grad_m2: 2.0 * sigma_beta,
        grad_m3: 3.0 * m3_contracted,
        grad_m4: 4.0 * m4_contracted,
    })
}
