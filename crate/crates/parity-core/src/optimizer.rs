//! Equal-risk-contribution optimisation on the simplex.
//!
//! Minimises `sum_ij (TRC_i - TRC_j)^2` subject to `sum beta_i = 1`,
//! `0 <= beta_i <= 1`, for any of the parametric risk measures. The
//! solver is projected gradient descent with Armijo backtracking along the
//! projection arc and multi-start (equal weights plus Dirichlet(1) draws).
//! The simplex projection is the exact Euclidean one, so every iterate is
//! feasible.
//!
//! The objective is evaluated through the algebraic identity
//! `sum_ij (t_i - t_j)^2 = 2 N sum_i t_i^2 - 2 (sum_i t_i)^2`; its
//! gradient chains the measure's analytic marginal contributions through a
//! central-difference Jacobian of the TRC map.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backtest::gini;
use crate::comoments::CoMomentSet;
use crate::error::{Error, Result};
use crate::riskmeasures::{modified_es, modified_var, trc_volatility, Measure};

/// Step used by the central-difference TRC Jacobian.
const JACOBIAN_STEP: f64 = 1e-6;
/// KKT stationarity threshold on the projected gradient.
const KKT_TOL: f64 = 1e-6;
/// Iteration cap per restart.
const MAX_ITER: usize = 3000;

/// An equal-risk-contribution problem description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskParityProblem {
    /// Factor co-moments.
    pub com: CoMomentSet,
    /// Parametric measure to equalise.
    pub measure: Measure,
    /// Confidence level for the tail measures (ignored by volatility).
    pub level: f64,
    /// Problem dimension.
    pub n: usize,
    /// Convergence threshold on the objective, relative to `total^2`.
    pub tolerance: f64,
    /// Number of starts (equal weights plus Dirichlet draws).
    pub max_restarts: usize,
}

impl RiskParityProblem {
    /// Build a validated problem with default tolerance `1e-10` (relative
    /// to the squared risk total) and 8 restarts.
    pub fn new(com: CoMomentSet, measure: Measure, level: f64) -> Result<Self> {
        if !measure.is_parametric() {
            return Err(Error::InvalidParam {
                name: "measure",
                reason: "risk parity optimisation needs a parametric measure".into(),
            });
        }
        let n = com.dim();
        if n < 2 {
            return Err(Error::DimensionMismatch(format!(
                "need at least two factors, got {n}"
            )));
        }
        if measure != Measure::Volatility && !(level > 0.0 && level < 0.5) {
            return Err(Error::InvalidLevel {
                level,
                context: "(0, 0.5) for tail measures",
            });
        }
        Ok(Self {
            com,
            measure,
            level,
            n,
            tolerance: 1e-10,
            max_restarts: 8,
        })
    }

    fn trc(&self, beta: &DVector<f64>) -> Result<(f64, Vec<f64>)> {
        let report = match self.measure {
            Measure::Volatility => trc_volatility(&self.com, beta)?,
            Measure::ModifiedVaR => modified_var(&self.com, beta, self.level)?,
            Measure::ModifiedEs => modified_es(&self.com, beta, self.level)?,
            _ => unreachable!("validated at construction"),
        };
        Ok((report.total, report.trc))
    }
}

/// A solved weighting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    /// Weights on the simplex.
    pub beta: Vec<f64>,
    /// `sum_ij (TRC_i - TRC_j)^2` at `beta`.
    pub objective: f64,
    /// `max_ij |TRC_i - TRC_j| / total`.
    pub trc_dispersion: f64,
    /// Restarts consumed.
    pub restarts_used: usize,
    /// Objective threshold and KKT stationarity both met.
    pub converged: bool,
    /// Indices of zero-variance factors removed before optimisation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<usize>,
}

/// Exact Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut rho = 0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            rho = j;
            theta = t;
        }
    }
    let _ = rho;
    DVector::from_fn(n, |i, _| (v[i] - theta).max(0.0))
}

/// Objective value and gradient at `beta`.
///
/// The gradient assembles `J' (4 N t - 4 sum(t) 1)` where `J` is the
/// central-difference Jacobian of the TRC map (analytic marginal
/// contributions inside, differenced once in `beta`).
pub fn objective(problem: &RiskParityProblem, beta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let n = problem.n;
    let (_, trc) = problem.trc(beta)?;
    let sum_t: f64 = trc.iter().sum();
    let sum_t2: f64 = trc.iter().map(|t| t * t).sum();
    let value = 2.0 * n as f64 * sum_t2 - 2.0 * sum_t * sum_t;

    // Residual weights of the quadratic form.
    let w: Vec<f64> = trc.iter().map(|t| 4.0 * n as f64 * t - 4.0 * sum_t).collect();

    let h = JACOBIAN_STEP;
    let mut grad = DVector::zeros(n);
    for k in 0..n {
        let mut up = beta.clone();
        let mut dn = beta.clone();
        up[k] += h;
        dn[k] -= h;
        let (_, tu) = problem.trc(&up)?;
        let (_, td) = problem.trc(&dn)?;
        let mut g = 0.0;
        for i in 0..n {
            g += w[i] * (tu[i] - td[i]) / (2.0 * h);
        }
        grad[k] = g;
    }
    Ok((value, grad))
}

fn dirichlet_draw(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut v = DVector::from_fn(n, |_, _| -(rng.gen_range(1e-12..1.0_f64)).ln());
    let total = v.sum();
    v /= total;
    v
}

struct RestartOutcome {
    beta: DVector<f64>,
    objective: f64,
    kkt: f64,
}

fn run_restart(problem: &RiskParityProblem, start: DVector<f64>) -> Result<RestartOutcome> {
    let mut x = project_to_simplex(&start);
    let (mut fx, mut grad) = objective(problem, &x)?;
    let mut step = 1.0;
    let mut stall = 0usize;

    for _ in 0..MAX_ITER {
        debug_assert!(
            (x.sum() - 1.0).abs() < 1e-10 && x.iter().all(|&b| (-1e-12..=1.0 + 1e-12).contains(&b)),
            "iterate left the simplex"
        );

        // Armijo backtracking along the projection arc.
        let mut accepted = false;
        let mut t = step;
        for _ in 0..50 {
            let candidate = project_to_simplex(&(&x - t * &grad));
            let d = &candidate - &x;
            if d.norm() < 1e-16 {
                break;
            }
            let fc = match objective(problem, &candidate) {
                Ok((v, _)) => v,
                Err(_) => {
                    t *= 0.5;
                    continue;
                }
            };
            if fc <= fx + 1e-4 * grad.dot(&d) {
                let improvement = fx - fc;
                x = candidate;
                fx = fc;
                grad = objective(problem, &x)?.1;
                step = (t * 2.0).min(1e6);
                accepted = true;
                stall = if improvement > 1e-14 * (fx.abs() + 1e-30) {
                    0
                } else {
                    stall + 1
                };
                break;
            }
            t *= 0.5;
        }

        if !accepted {
            break;
        }
        let kkt = (project_to_simplex(&(&x - &grad)) - &x).amax();
        if fx <= 0.0 || (kkt < KKT_TOL * 1e-4 && stall > 5) || stall > 30 {
            break;
        }
    }

    let kkt = (project_to_simplex(&(&x - &grad)) - &x).amax();
    Ok(RestartOutcome {
        beta: x,
        objective: fx,
        kkt,
    })
}

/// Solve the equal-risk-contribution problem.
///
/// Restarts run from equal weights and `max_restarts - 1` Dirichlet(1)
/// draws; the best objective wins, with ties (relative gap below `1e-9`)
/// broken toward the lowest Gini index and then the lowest restart index.
/// Zero-variance factors are excluded up front and reported with zero
/// weight in the solution.
pub fn solve(problem: &RiskParityProblem, seed: u64) -> Result<Solution> {
    // Degenerate factors: zero variance on the covariance diagonal.
    let diag_max = (0..problem.n)
        .map(|i| problem.com.sigma[(i, i)])
        .fold(0.0_f64, f64::max);
    if diag_max <= 0.0 {
        return Err(Error::ZeroVariancePortfolio);
    }
    let keep: Vec<usize> = (0..problem.n)
        .filter(|&i| problem.com.sigma[(i, i)] > 1e-14 * diag_max)
        .collect();
    let excluded: Vec<usize> = (0..problem.n).filter(|i| !keep.contains(i)).collect();

    if keep.len() < problem.n {
        let reduced = RiskParityProblem {
            com: problem.com.subset(&keep),
            measure: problem.measure,
            level: problem.level,
            n: keep.len(),
            tolerance: problem.tolerance,
            max_restarts: problem.max_restarts,
        };
        let sub = solve(&reduced, seed)?;
        let mut beta = vec![0.0; problem.n];
        for (pos, &idx) in keep.iter().enumerate() {
            beta[idx] = sub.beta[pos];
        }
        return Ok(Solution {
            beta,
            excluded,
            ..sub
        });
    }

    let n = problem.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcomes: Vec<RestartOutcome> = Vec::new();

    for r in 0..problem.max_restarts.max(1) {
        let start = if r == 0 {
            DVector::from_element(n, 1.0 / n as f64)
        } else {
            dirichlet_draw(n, &mut rng)
        };
        outcomes.push(run_restart(problem, start)?);
    }

    // Best objective; near-ties resolved by portfolio concentration.
    let best_obj = outcomes
        .iter()
        .map(|o| o.objective)
        .fold(f64::INFINITY, f64::min);
    let mut winner = 0;
    let mut winner_gini = f64::INFINITY;
    for (idx, o) in outcomes.iter().enumerate() {
        if o.objective <= best_obj * (1.0 + 1e-9) + 1e-300 {
            let g = gini(o.beta.as_slice()).unwrap_or(f64::INFINITY);
            if g < winner_gini - 1e-15 {
                winner = idx;
                winner_gini = g;
            }
        }
    }
    let best = &outcomes[winner];

    let (total, trc) = problem.trc(&best.beta)?;
    let max_gap = trc
        .iter()
        .flat_map(|a| trc.iter().map(move |b| (a - b).abs()))
        .fold(0.0_f64, f64::max);
    let trc_dispersion = max_gap / total.abs().max(1e-300);
    let converged = best.objective < problem.tolerance * total * total && best.kkt < KKT_TOL;

    Ok(Solution {
        beta: best.beta.iter().copied().collect(),
        objective: best.objective,
        trc_dispersion,
        restarts_used: outcomes.len(),
        converged,
        excluded,
    })
}
