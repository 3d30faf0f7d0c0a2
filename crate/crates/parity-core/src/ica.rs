//! FastICA separation of factor returns into independent sources.
//!
//! The observed factor matrix `F` (one series per row) is decomposed as
//! `F_centered = A * S` where the rows of `S` are statistically
//! independent unit-variance sources and `A` is the square mixing matrix.
//! Separation runs the one-unit (deflation) fixed-point iteration with the
//! log-cosh contrast on whitened data.
//!
//! ICA leaves sign and permutation free; both are pinned here so that
//! downstream runs are reproducible: each source is flipped to nonpositive
//! sample skewness (ties broken toward positive third-lag
//! autocorrelation) and components are ordered by descending excess
//! kurtosis. Co-moment assembly is invariant to this choice.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convergence tolerance on `|<w_new, w_old>|` per component.
const CONVERGENCE_TOL: f64 = 1e-9;
/// Iteration cap per component.
const MAX_ITER: usize = 500;

/// A panel of `N` return series over `T` observations (series in rows).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataMatrix {
    /// `N x T` values, one series per row.
    pub values: DMatrix<f64>,
    /// Series names, one per row.
    pub labels: Vec<String>,
}

impl DataMatrix {
    /// Build a validated panel: `T > N`, finite entries, positive sample
    /// variance in every row.
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, t) = (values.nrows(), values.ncols());
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {n} series",
                labels.len()
            )));
        }
        if t <= n {
            return Err(Error::Data(format!(
                "need more observations than series: T = {t}, N = {n}"
            )));
        }
        for (i, row) in values.row_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "series `{}` contains non-finite values",
                    labels[i]
                )));
            }
            let mean = row.mean();
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t as f64 - 1.0);
            if var <= 0.0 {
                return Err(Error::DegenerateSample(format!(
                    "series `{}` has zero variance",
                    labels[i]
                )));
            }
        }
        Ok(Self { values, labels })
    }

    /// Number of series.
    pub fn n_series(&self) -> usize {
        self.values.nrows()
    }

    /// Number of observations.
    pub fn n_obs(&self) -> usize {
        self.values.ncols()
    }
}

/// Centering and whitening transform: `z = K (x - mean)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Whitener {
    /// Whitening matrix `K` (`N x N`).
    pub matrix: DMatrix<f64>,
    /// Inverse transform `K^{-1}`.
    pub inverse: DMatrix<f64>,
    /// Per-series means removed before whitening.
    pub mean: DVector<f64>,
}

/// Per-component iteration record of the deflation loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentConvergence {
    /// Fixed-point iterations spent on this component.
    pub iterations: usize,
    /// Whether the component met the convergence criterion.
    pub converged: bool,
    /// Set when the extracted source shows no usable non-Gaussian signal
    /// (near-zero skewness and excess kurtosis), in which case the
    /// rotation is not identifiable even if the iteration settled.
    pub degenerate: bool,
}

/// Fitted ICA decomposition `F_centered = A * S`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ICAModel {
    /// Mixing matrix `A` (`N x N`).
    pub mixing: DMatrix<f64>,
    /// Unmixing matrix `W` with `S = W * F_centered` and `A W = I`.
    pub unmixing: DMatrix<f64>,
    /// Source matrix `S` (`N x T`), unit sample variance per row.
    pub sources: DMatrix<f64>,
    /// Centering/whitening transform used.
    pub whitener: Whitener,
    /// Per-component convergence diagnostics.
    pub convergence_info: Vec<ComponentConvergence>,
}

impl ICAModel {
    /// True when every component converged.
    pub fn converged(&self) -> bool {
        self.convergence_info.iter().all(|c| c.converged)
    }

    /// True when every component converged on an identifiable
    /// (non-Gaussian) source.
    pub fn identifiable(&self) -> bool {
        self.convergence_info
            .iter()
            .all(|c| c.converged && !c.degenerate)
    }
}

fn sample_covariance(centered: &DMatrix<f64>) -> DMatrix<f64> {
    let t = centered.ncols() as f64;
    centered * centered.transpose() / (t - 1.0)
}

/// Center and whiten a panel: the output rows have zero mean and identity
/// sample covariance.
///
/// Whitening uses the symmetric eigendecomposition of the sample
/// covariance; a numerically rank-deficient covariance is rejected naming
/// the series most aligned with the null direction.
pub fn center_whiten(data: &DataMatrix) -> Result<(DMatrix<f64>, Whitener)> {
    let n = data.n_series();
    let mean = DVector::from_iterator(n, data.values.row_iter().map(|r| r.mean()));
    let mut centered = data.values.clone();
    for (i, mut row) in centered.row_iter_mut().enumerate() {
        row.add_scalar_mut(-mean[i]);
    }

    let cov = sample_covariance(&centered);
    let eig = cov.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.max();
    let min_idx = eig.eigenvalues.imin();
    let min_ev = eig.eigenvalues[min_idx];
    if min_ev <= 1e-12 * max_ev {
        let null_vec = eig.eigenvectors.column(min_idx);
        let offender = null_vec.iamax();
        return Err(Error::RankDeficient {
            series: data.labels[offender].clone(),
            reason: format!("smallest covariance eigenvalue {min_ev:.3e} vs largest {max_ev:.3e}"),
        });
    }

    let mut k = eig.eigenvectors.clone().transpose();
    let mut k_inv = eig.eigenvectors.clone();
    for (j, ev) in eig.eigenvalues.iter().enumerate() {
        let s = ev.sqrt();
        k.row_mut(j).scale_mut(1.0 / s);
        k_inv.column_mut(j).scale_mut(s);
    }

    let whitened = &k * &centered;
    Ok((
        whitened,
        Whitener {
            matrix: k,
            inverse: k_inv,
            mean,
        },
    ))
}

fn row_skewness(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let m2 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = row.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

fn row_excess_kurtosis(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let m2 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = row.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

fn lag3_autocorrelation(row: &[f64]) -> f64 {
    let n = row.len();
    if n < 4 {
        return 0.0;
    }
    let mean = row.iter().sum::<f64>() / n as f64;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    if var <= 0.0 {
        return 0.0;
    }
    let cov: f64 = (0..n - 3)
        .map(|t| (row[t] - mean) * (row[t + 3] - mean))
        .sum();
    cov / var
}

/// FastICA with the log-cosh contrast and deflation orthogonalisation.
///
/// Non-convergence of a component is not an error: the model is returned
/// with the component flagged in `convergence_info`.
pub fn fastica(data: &DataMatrix, seed: u64) -> Result<ICAModel> {
    let n = data.n_series();
    let t = data.n_obs();
    let (z, whitener) = center_whiten(data)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rotation = DMatrix::<f64>::zeros(n, n);
    let mut info = Vec::with_capacity(n);

    for comp in 0..n {
        let mut w = DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-1.0..1.0)));
        // Orthogonalise the start against previous components.
        for prev in 0..comp {
            let p = rotation.row(prev).transpose();
            let proj = w.dot(&p);
            w -= proj * &p;
        }
        w /= w.norm();

        let mut iterations = 0;
        let mut converged = false;
        while iterations < MAX_ITER {
            iterations += 1;
            // One fixed-point step: w <- E[z g(w'z)] - E[g'(w'z)] w, with
            // g = tanh from the log-cosh contrast.
            let y = z.tr_mul(&w); // T-vector of projections
            let g = y.map(f64::tanh);
            let g_prime_mean = g.iter().map(|v| 1.0 - v * v).sum::<f64>() / t as f64;
            let mut w_new = (&z * &g) / t as f64 - g_prime_mean * &w;

            for prev in 0..comp {
                let p = rotation.row(prev).transpose();
                let proj = w_new.dot(&p);
                w_new -= proj * &p;
            }
            let norm = w_new.norm();
            if norm <= f64::MIN_POSITIVE {
                break;
            }
            w_new /= norm;

            let overlap = w_new.dot(&w).abs();
            w = w_new;
            if overlap > 1.0 - CONVERGENCE_TOL {
                converged = true;
                break;
            }
        }

        rotation.row_mut(comp).copy_from(&w.transpose());
        info.push(ComponentConvergence {
            iterations,
            converged,
            degenerate: false,
        });
    }

    let mut sources = &rotation * &z;
    let mut unmixing = &rotation * &whitener.matrix;
    let mut mixing = &whitener.inverse * rotation.transpose();

    // Sign normalisation: nonpositive skewness, ties toward positive
    // third-lag autocorrelation.
    for i in 0..n {
        let row: Vec<f64> = sources.row(i).iter().copied().collect();
        let skew = row_skewness(&row);
        let flip = if skew.abs() > 1e-8 {
            skew > 0.0
        } else {
            lag3_autocorrelation(&row) < 0.0
        };
        if flip {
            sources.row_mut(i).neg_mut();
            unmixing.row_mut(i).neg_mut();
            mixing.column_mut(i).neg_mut();
        }
    }

    // Identifiability: a source with neither skewness nor excess kurtosis
    // beyond sampling noise is Gaussian to the contrast and its direction
    // is arbitrary.
    for i in 0..n {
        let row: Vec<f64> = sources.row(i).iter().copied().collect();
        if row_skewness(&row).abs() < 0.25 && row_excess_kurtosis(&row).abs() < 0.5 {
            info[i].degenerate = true;
        }
    }

    // Deterministic component order: descending excess kurtosis.
    let mut order: Vec<usize> = (0..n).collect();
    let kurt: Vec<f64> = (0..n)
        .map(|i| {
            let row: Vec<f64> = sources.row(i).iter().copied().collect();
            row_excess_kurtosis(&row)
        })
        .collect();
    order.sort_by(|&a, &b| kurt[b].partial_cmp(&kurt[a]).unwrap_or(std::cmp::Ordering::Equal));

    let sources = DMatrix::from_fn(n, t, |i, j| sources[(order[i], j)]);
    let unmixing = DMatrix::from_fn(n, n, |i, j| unmixing[(order[i], j)]);
    let mixing = DMatrix::from_fn(n, n, |i, j| mixing[(i, order[j])]);
    let convergence_info: Vec<ComponentConvergence> =
        order.iter().map(|&i| info[i].clone()).collect();

    Ok(ICAModel {
        mixing,
        unmixing,
        sources,
        whitener,
        convergence_info,
    })
}

/// Render the mixing matrix as CSV with 10-significant-digit decimals,
/// row-major.
pub fn mixing_matrix_csv(model: &ICAModel) -> String {
    let mut out = String::new();
    for i in 0..model.mixing.nrows() {
        let cells: Vec<String> = (0..model.mixing.ncols())
            .map(|j| format!("{:.9e}", model.mixing[(i, j)]))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sample_variance_gamma, MixedTSParams};

    fn toy_labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("F{i}")).collect()
    }

    /// Heavy-tailed independent sources for ground-truth mixing tests.
    fn vg_sources(n: usize, t: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::zeros(n, t);
        for i in 0..n {
            let p = MixedTSParams::new(0.0, 0.5 * (i as f64 - 1.0), 0.9, 0.35, 2.0, 1.5, 1.5)
                .unwrap();
            let s = sample_variance_gamma(&p, t, &mut rng).unwrap();
            for (j, v) in s.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    fn random_mixing(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
                + DMatrix::identity(n, n) * 1.5;
            if a.clone().lu().try_inverse().is_some() {
                return a;
            }
        }
    }

    /// Amari separation index of `P = W_est * A_true`; zero for a perfect
    /// scaled permutation.
    fn amari_index(p: &DMatrix<f64>) -> f64 {
        let n = p.nrows();
        let mut total = 0.0;
        for i in 0..n {
            let row_max = p.row(i).iter().map(|v| v.abs()).fold(0.0, f64::max);
            let row_sum: f64 = p.row(i).iter().map(|v| v.abs()).sum();
            total += row_sum / row_max - 1.0;
        }
        for j in 0..n {
            let col_max = p.column(j).iter().map(|v| v.abs()).fold(0.0, f64::max);
            let col_sum: f64 = p.column(j).iter().map(|v| v.abs()).sum();
            total += col_sum / col_max - 1.0;
        }
        total / (2.0 * n as f64 * (n as f64 - 1.0))
    }

    #[test]
    fn rejects_fat_matrices_and_constant_rows() {
        let m = DMatrix::from_element(3, 3, 1.0);
        assert!(DataMatrix::new(m, toy_labels(3)).is_err());
        let mut m = DMatrix::from_fn(2, 50, |i, j| ((i + 1) * j) as f64);
        m.row_mut(1).fill(2.0);
        assert!(matches!(
            DataMatrix::new(m, toy_labels(2)).unwrap_err(),
            Error::DegenerateSample(_)
        ));
    }

    #[test]
    fn whitening_yields_identity_covariance() {
        let data = DataMatrix::new(
            random_mixing(3, 5) * vg_sources(3, 1500, 5),
            toy_labels(3),
        )
        .unwrap();
        let (white, _) = center_whiten(&data).unwrap();
        let cov = sample_covariance(&white);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (cov[(i, j)] - expected).abs() < 1e-10,
                    "cov[{i}][{j}] = {}",
                    cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn whitener_on_white_data_is_identity_like() {
        let data = DataMatrix::new(vg_sources(3, 2000, 8), toy_labels(3)).unwrap();
        let (white, _) = center_whiten(&data).unwrap();
        let rewhite = DataMatrix::new(white, toy_labels(3)).unwrap();
        let (_, w2) = center_whiten(&rewhite).unwrap();
        // Input covariance is already the identity, so K must be orthogonal
        // with unit-magnitude entries on some permutation.
        let k = &w2.matrix;
        let ktk = k.transpose() * k;
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (ktk[(i, j)] - expected).abs() < 1e-8,
                    "K'K[{i}][{j}] = {}",
                    ktk[(i, j)]
                );
            }
        }
    }

    #[test]
    fn dewhitening_roundtrip() {
        let data = DataMatrix::new(
            random_mixing(3, 21) * vg_sources(3, 1000, 22),
            toy_labels(3),
        )
        .unwrap();
        let (white, w) = center_whiten(&data).unwrap();
        let mut rebuilt = &w.inverse * white;
        for (i, mut row) in rebuilt.row_iter_mut().enumerate() {
            row.add_scalar_mut(w.mean[i]);
        }
        let err = (&rebuilt - &data.values).norm() / data.values.norm();
        assert!(err < 1e-10, "round-trip error {err}");
    }

    #[test]
    fn rank_deficiency_names_a_series() {
        let base = vg_sources(2, 300, 3);
        let m = DMatrix::from_fn(3, 300, |i, j| match i {
            0 | 1 => base[(i, j)],
            _ => 2.0 * base[(0, j)],
        });
        let data = DataMatrix::new(m, toy_labels(3)).unwrap();
        match center_whiten(&data).unwrap_err() {
            Error::RankDeficient { series, .. } => assert!(series.starts_with('F')),
            other => panic!("expected rank deficiency, got {other}"),
        }
    }

    #[test]
    fn recovers_signed_permutation_for_independent_input() {
        // Already-independent non-Gaussian rows: the recovered sources
        // must match the inputs up to sign and order.
        let src = vg_sources(3, 3000, 31);
        let data = DataMatrix::new(src.clone(), toy_labels(3)).unwrap();
        let model = fastica(&data, 42).unwrap();
        assert!(model.converged());

        for i in 0..3 {
            let mut best = 0.0_f64;
            for j in 0..3 {
                let s: Vec<f64> = model.sources.row(j).iter().copied().collect();
                let x: Vec<f64> = src.row(i).iter().copied().collect();
                let sm = s.iter().sum::<f64>() / s.len() as f64;
                let xm = x.iter().sum::<f64>() / x.len() as f64;
                let num: f64 = s.iter().zip(&x).map(|(a, b)| (a - sm) * (b - xm)).sum();
                let den = (s.iter().map(|a| (a - sm).powi(2)).sum::<f64>()
                    * x.iter().map(|b| (b - xm).powi(2)).sum::<f64>())
                .sqrt();
                best = best.max((num / den).abs());
            }
            assert!(best > 0.99, "source {i} best |corr| = {best}");
        }
    }

    #[test]
    fn model_invariants_hold() {
        let n = 4;
        let a_true = random_mixing(n, 17);
        let data = DataMatrix::new(&a_true * vg_sources(n, 2000, 18), toy_labels(n)).unwrap();
        let model = fastica(&data, 7).unwrap();

        // Reconstruction of the centered data.
        let mut centered = data.values.clone();
        for (i, mut row) in centered.row_iter_mut().enumerate() {
            row.add_scalar_mut(-model.whitener.mean[i]);
        }
        let rec_err = (&model.mixing * &model.sources - &centered).norm() / centered.norm();
        assert!(rec_err < 1e-8, "reconstruction error {rec_err}");

        // A W = I.
        let id_err = (&model.mixing * &model.unmixing - DMatrix::<f64>::identity(n, n)).norm();
        assert!(id_err < 1e-8, "A*W deviates from identity by {id_err}");

        // Unit variance, decorrelated sources.
        let cov = sample_covariance(&model.sources);
        for i in 0..n {
            assert!((cov[(i, i)] - 1.0).abs() < 1e-8);
            for j in 0..i {
                assert!(cov[(i, j)].abs() < 1e-6, "corr[{i}][{j}] = {}", cov[(i, j)]);
            }
        }

        // Sign convention: nonpositive sample skewness per source.
        for i in 0..n {
            let row: Vec<f64> = model.sources.row(i).iter().copied().collect();
            assert!(row_skewness(&row) <= 1e-8);
        }

        // Order convention: descending excess kurtosis.
        let kurts: Vec<f64> = (0..n)
            .map(|i| {
                let row: Vec<f64> = model.sources.row(i).iter().copied().collect();
                row_excess_kurtosis(&row)
            })
            .collect();
        for pair in kurts.windows(2) {
            assert!(pair[0] >= pair[1] - 1e-12, "kurtosis order violated: {kurts:?}");
        }
    }

    #[test]
    fn amari_error_on_ten_by_250_benchmark() {
        let n = 10;
        let a_true = random_mixing(n, 101);
        let data = DataMatrix::new(&a_true * vg_sources(n, 250, 102), toy_labels(n)).unwrap();
        let model = fastica(&data, 4242).unwrap();
        let p = &model.unmixing * &a_true;
        let amari = amari_index(&p);
        assert!(amari < 0.05, "Amari index {amari} too large");
    }

    #[test]
    fn gaussian_data_flags_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let m = DMatrix::from_fn(3, 2000, |_, _| {
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
        });
        let data = DataMatrix::new(m, toy_labels(3)).unwrap();
        let model = fastica(&data, 5).unwrap();
        assert!(
            !model.identifiable(),
            "Gaussian-only data must flag non-convergence or degeneracy: {:?}",
            model.convergence_info
        );
        assert!(
            model.convergence_info.iter().any(|c| c.degenerate),
            "Gaussian sources must be marked degenerate"
        );
    }

    #[test]
    fn identical_seed_is_bitwise_deterministic() {
        let data = DataMatrix::new(
            random_mixing(3, 55) * vg_sources(3, 800, 56),
            toy_labels(3),
        )
        .unwrap();
        let m1 = fastica(&data, 9).unwrap();
        let m2 = fastica(&data, 9).unwrap();
        assert_eq!(m1.mixing, m2.mixing);
        assert_eq!(m1.sources, m2.sources);
    }

    #[test]
    fn mixing_csv_has_ten_significant_digits() {
        let data = DataMatrix::new(vg_sources(2, 400, 60), toy_labels(2)).unwrap();
        let model = fastica(&data, 3).unwrap();
        let csv = mixing_matrix_csv(&model);
        let first = csv.lines().next().unwrap();
        let cell = first.split(',').next().unwrap();
        // d.dddddddddE+-xx -> 10 significant digits
        let mantissa: String = cell
            .chars()
            .take_while(|c| *c != 'e' && *c != 'E')
            .filter(|c| c.is_ascii_digit())
            .collect();
        assert_eq!(mantissa.len(), 10, "cell {cell}");
    }
}
