//! Damped (Levenberg–Marquardt style) least squares with a forward-difference
//! Jacobian and reflective handling of box bounds. Sized for the few-parameter
//! fits in this crate; the residual callback does all the heavy lifting.

use super::FitError;

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative decrease of the cost below which the fit is converged.
    pub ftol: f64,
    /// Relative step size below which the fit is converged.
    pub xtol: f64,
    /// Relative forward-difference step for the Jacobian.
    pub fd_rel_step: f64,
    pub lambda_init: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-10,
            xtol: 1e-10,
            fd_rel_step: 1e-6,
            lambda_init: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub x: Vec<f64>,
    /// Covariance of the parameters, (JᵀJ)⁻¹ at the optimum. For residuals
    /// already scaled by measurement sigmas this is the parameter covariance;
    /// otherwise multiply by SSR/(N−p).
    pub covariance: Vec<Vec<f64>>,
    /// √(Σ rᵢ²) at the optimum.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_residuals: usize,
}

/// Reflect a trial point into [lb, ub] component-wise.
fn reflect_into(x: &mut [f64], lb: &[f64], ub: &[f64]) {
    for i in 0..x.len() {
        let (lo, hi) = (lb[i], ub[i]);
        for _ in 0..64 {
            if x[i] < lo {
                x[i] = lo + (lo - x[i]);
            } else if x[i] > hi {
                x[i] = hi - (x[i] - hi);
            } else {
                break;
            }
        }
        x[i] = x[i].clamp(lo, hi);
    }
}

/// Solve A·x = b for small dense A by Gauss elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, FitError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(FitError::SingularSystem);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

/// Invert a small symmetric matrix by solving against unit vectors.
fn invert(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, FitError> {
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solve(a.to_vec(), e)?;
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Ok(inv)
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimize Σ rᵢ(x)² over the box [lb, ub].
pub fn lm_fit<F>(
    mut residuals: F,
    x0: &[f64],
    lb: &[f64],
    ub: &[f64],
    opts: &LmOptions,
) -> Result<LmFit, FitError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, FitError>,
{
    let n_par = x0.len();
    assert!(n_par > 0 && lb.len() == n_par && ub.len() == n_par);
    let mut x = x0.to_vec();
    reflect_into(&mut x, lb, ub);
    let mut r = residuals(&x)?;
    let n_res = r.len();
    if n_res < n_par {
        return Err(FitError::Arity {
            needed: n_par,
            got: n_res,
        });
    }
    let mut cost = cost_of(&r);
    let mut lambda = opts.lambda_init;
    let mut converged = false;
    let mut iterations = 0;
    let mut jt_j = vec![vec![0.0; n_par]; n_par];

    while iterations < opts.max_iter {
        iterations += 1;
        // forward-difference Jacobian, switching to backward at upper bounds
        let mut jac = vec![vec![0.0; n_par]; n_res];
        for j in 0..n_par {
            let h_raw = opts.fd_rel_step * x[j].abs().max(opts.fd_rel_step);
            let h = if x[j] + h_raw <= ub[j] { h_raw } else { -h_raw };
            let mut xp = x.clone();
            xp[j] += h;
            let rp = residuals(&xp)?;
            for i in 0..n_res {
                jac[i][j] = (rp[i] - r[i]) / h;
            }
        }
        for a in 0..n_par {
            for b in 0..n_par {
                jt_j[a][b] = (0..n_res).map(|i| jac[i][a] * jac[i][b]).sum();
            }
        }
        let grad: Vec<f64> = (0..n_par)
            .map(|a| (0..n_res).map(|i| jac[i][a] * r[i]).sum())
            .collect();

        // inner damping loop
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jt_j.clone();
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] += lambda * row[a].max(1e-300);
            }
            let step = match solve(damped, grad.iter().map(|g| -g).collect()) {
                Ok(s) => s,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut x_try: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + s).collect();
            reflect_into(&mut x_try, lb, ub);
            let r_try = residuals(&x_try)?;
            let cost_try = cost_of(&r_try);
            if cost_try < cost {
                let rel_step = x_try
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
                    .fold(0.0, f64::max);
                let rel_drop = (cost - cost_try) / cost.max(1e-300);
                x = x_try;
                r = r_try;
                cost = cost_try;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel_drop < opts.ftol || rel_step < opts.xtol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
        if converged {
            break;
        }
        if !improved {
            // no downhill step found at any damping: local optimum
            converged = cost.is_finite();
            break;
        }
    }

    let covariance = invert(&jt_j).unwrap_or_else(|_| vec![vec![f64::NAN; n_par]; n_par]);
    Ok(LmFit {
        x,
        covariance,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
        n_residuals: n_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fits_exponential_decay() {
        // y = 3.2 exp(-1.7 t) sampled noiselessly
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = t.iter().map(|&ti| 3.2 * (-1.7 * ti).exp()).collect();
        let res = |p: &[f64]| -> Result<Vec<f64>, FitError> {
            Ok(t.iter()
                .zip(&y)
                .map(|(&ti, &yi)| p[0] * (-p[1] * ti).exp() - yi)
                .collect())
        };
        let fit = lm_fit(res, &[1.0, 1.0], &[0.0, 0.0], &[100.0, 100.0], &LmOptions::default()).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.x[0], 3.2, max_relative = 1e-6);
        assert_relative_eq!(fit.x[1], 1.7, max_relative = 1e-6);
        assert!(fit.residual_norm < 1e-6);
    }

    #[test]
    fn respects_bounds_by_reflection() {
        // optimum of (x-2)^2 constrained to [0, 1] must land on the bound
        let res = |p: &[f64]| -> Result<Vec<f64>, FitError> { Ok(vec![p[0] - 2.0]) };
        let fit = lm_fit(res, &[0.5], &[0.0], &[1.0], &LmOptions::default()).unwrap();
        assert!(fit.x[0] <= 1.0 && fit.x[0] > 0.9);
    }

    #[test]
    fn covariance_matches_known_linear_case() {
        // linear model y = a + b t with unit sigmas: cov = (X'X)^-1
        let t = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.9, 5.2, 7.1];
        let res = |p: &[f64]| -> Result<Vec<f64>, FitError> {
            Ok(t.iter().zip(&y).map(|(&ti, &yi)| p[0] + p[1] * ti - yi).collect())
        };
        let fit = lm_fit(res, &[0.0, 0.0], &[-1e6, -1e6], &[1e6, 1e6], &LmOptions::default()).unwrap();
        let s = 4.0;
        let sx = 6.0;
        let sxx = 14.0;
        let det = s * sxx - sx * sx;
        assert_relative_eq!(fit.covariance[1][1], s / det, max_relative = 1e-6);
        assert_relative_eq!(fit.covariance[0][0], sxx / det, max_relative = 1e-6);
    }

    #[test]
    fn underdetermined_is_rejected() {
        let res = |_: &[f64]| -> Result<Vec<f64>, FitError> { Ok(vec![0.0]) };
        assert!(matches!(
            lm_fit(res, &[1.0, 1.0], &[0.0; 2], &[2.0; 2], &LmOptions::default()),
            Err(FitError::Arity { .. })
        ));
    }
}
