//! Derivative-free Nelder-Mead simplex minimisation.
//!
//! Standard reflection/expansion/contraction/shrink coefficients
//! (1, 2, 0.5, 0.5). Used for bounded likelihood maximisation through a
//! smooth reparameterisation of the constrained coordinates.

/// Result of a Nelder-Mead run.
#[derive(Debug, Clone)]
pub struct NmResult {
    /// Best point found.
    pub x: Vec<f64>,
    /// Objective value at `x`.
    pub fx: f64,
    /// Number of objective evaluations.
    pub evals: usize,
    /// True when the simplex collapsed below the f-spread tolerance.
    pub converged: bool,
}

/// Minimise `f` starting from `x0` with per-coordinate initial steps.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    ftol: f64,
    max_evals: usize,
) -> NmResult {
    let n = x0.len();
    assert_eq!(n, steps.len(), "one step per coordinate");

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }

    let mut evals = 0;
    let mut fvals: Vec<f64> = simplex
        .iter()
        .map(|v| {
            evals += 1;
            f(v)
        })
        .collect();

    let mut converged = false;
    while evals < max_evals {
        // Order: best first.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| fvals[i].partial_cmp(&fvals[j]).unwrap());
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let spread = (fvals[worst] - fvals[best]).abs();
        if spread <= ftol * (fvals[best].abs() + 1.0) {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (idx, v) in simplex.iter().enumerate() {
            if idx == worst {
                continue;
            }
            for (c, &vi) in centroid.iter_mut().zip(v) {
                *c += vi / n as f64;
            }
        }

        let lerp = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };

        let reflected = lerp(1.0);
        let fr = f(&reflected);
        evals += 1;

        if fr < fvals[best] {
            let expanded = lerp(2.0);
            let fe = f(&expanded);
            evals += 1;
            if fe < fr {
                simplex[worst] = expanded;
                fvals[worst] = fe;
            } else {
                simplex[worst] = reflected;
                fvals[worst] = fr;
            }
        } else if fr < fvals[second_worst] {
            simplex[worst] = reflected;
            fvals[worst] = fr;
        } else {
            let contracted = if fr < fvals[worst] {
                lerp(0.5)
            } else {
                lerp(-0.5)
            };
            let fc = f(&contracted);
            evals += 1;
            if fc < fvals[worst].min(fr) {
                simplex[worst] = contracted;
                fvals[worst] = fc;
            } else {
                // Shrink toward the best vertex.
                let best_v = simplex[best].clone();
                for (idx, v) in simplex.iter_mut().enumerate() {
                    if idx == best {
                        continue;
                    }
                    for (vi, &bi) in v.iter_mut().zip(&best_v) {
                        *vi = bi + 0.5 * (*vi - bi);
                    }
                    fvals[idx] = f(v);
                    evals += 1;
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    NmResult {
        x: simplex[best].clone(),
        fx: fvals[best],
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_rosenbrock() {
        let rosen =
            |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(rosen, &[-1.2, 1.0], &[0.5, 0.5], 1e-12, 4000);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4, "x = {:?}", r.x);
        assert!((r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn minimises_quadratic_bowl() {
        let r = minimize(
            |x: &[f64]| x.iter().map(|v| v * v).sum(),
            &[3.0, -2.0, 1.0],
            &[1.0, 1.0, 1.0],
            1e-14,
            4000,
        );
        assert!(r.fx < 1e-10);
    }
}
