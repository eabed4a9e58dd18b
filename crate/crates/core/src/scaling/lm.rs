//! Levenberg–Marquardt for small weighted least-squares problems.
//!
//! The Jacobian is taken by central differences. Callers pass *weighted*
//! residuals `(y_i - f_i(θ)) / σ_i`, so the returned `(JᵀJ)⁻¹` is the
//! parameter covariance.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when every accepted step changes each parameter by less
    /// than this relative amount.
    pub parameter_tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 2000,
            parameter_tolerance: 1e-9,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub chi2: f64,
    /// `(JᵀJ)⁻¹` at the solution, if the normal matrix is invertible.
    pub covariance: Option<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

fn chi2_of(r: &DVector<f64>) -> f64 {
    let c = r.norm_squared();
    if c.is_finite() {
        c
    } else {
        f64::INFINITY
    }
}

fn jacobian<F>(residuals: &F, x: &[f64], r0: &DVector<f64>) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let m = r0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1e-4);
        probe[j] = x[j] + h;
        let rp = residuals(&probe);
        probe[j] = x[j] - h;
        let rm = residuals(&probe);
        probe[j] = x[j];
        let (rp_ok, rm_ok) = (rp.iter().all(|v| v.is_finite()), rm.iter().all(|v| v.is_finite()));
        let col = match (rp_ok, rm_ok) {
            (true, true) => (rp - rm) / (2.0 * h),
            (true, false) => (rp - r0) / h,
            (false, true) => (r0 - rm) / h,
            (false, false) => return None,
        };
        jac.set_column(j, &col);
    }
    Some(jac)
}

/// Minimises `Σ r_i(θ)²` from `x0`.
///
/// A non-finite residual vector marks an infeasible point; such steps are
/// rejected like any step that increases χ².
pub fn minimize<F>(residuals: F, x0: &[f64], options: &LmOptions) -> LmResult
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = residuals(&x);
    let mut chi2 = chi2_of(&r);
    let mut lambda = options.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    if !chi2.is_finite() {
        return LmResult {
            params: x,
            chi2,
            covariance: None,
            iterations,
            converged: false,
        };
    }

    'outer: while iterations < options.max_iterations {
        iterations += 1;
        let Some(jac) = jacobian(&residuals, &x, &r) else {
            break;
        };
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if chi2 == 0.0 || grad.amax() == 0.0 {
            converged = true;
            break;
        }
        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        break 'outer;
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let r_trial = residuals(&trial);
            let chi2_trial = chi2_of(&r_trial);
            if chi2_trial <= chi2 {
                let small = step
                    .iter()
                    .zip(&x)
                    .all(|(d, xi)| d.abs() <= options.parameter_tolerance * xi.abs().max(1e-12));
                x = trial;
                r = r_trial;
                let improved = chi2 - chi2_trial;
                chi2 = chi2_trial;
                lambda = (lambda / 10.0).max(1e-15);
                if small || (improved <= 1e-15 * chi2.max(1e-300) && small_relative(&step, &x, 1e-7)) {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // No downhill step left: stationary point to working precision.
                converged = true;
                break 'outer;
            }
        }
    }

    let covariance = jacobian(&residuals, &x, &r).and_then(|jac| (jac.transpose() * jac).try_inverse());
    LmResult {
        params: x,
        chi2,
        covariance,
        iterations,
        converged,
    }
}

fn small_relative(step: &DVector<f64>, x: &[f64], tol: f64) -> bool {
    step.iter().zip(x).all(|(d, xi)| d.abs() <= tol * xi.abs().max(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fits_exponential_decay() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * (-1.3 * x).exp() + 0.1).collect();
        let res = minimize(
            |p| DVector::from_iterator(xs.len(), xs.iter().zip(&ys).map(|(x, y)| (y - (p[0] * (-p[1] * x).exp() + p[2])) / 0.01)),
            &[1.0, 0.5, 0.0],
            &LmOptions::default(),
        );
        assert!(res.converged);
        assert_relative_eq!(res.params[0], 2.5, max_relative = 1e-8);
        assert_relative_eq!(res.params[1], 1.3, max_relative = 1e-8);
        assert_relative_eq!(res.params[2], 0.1, max_relative = 1e-7);
        assert!(res.covariance.is_some());
    }

    #[test]
    fn straight_line_covariance_matches_closed_form() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [1.1, 2.9, 5.2, 7.1, 8.8];
        let s = 0.2;
        let res = minimize(
            |p| DVector::from_iterator(5, xs.iter().zip(&ys).map(|(x, y)| (y - p[0] - p[1] * x) / s)),
            &[0.0, 0.0],
            &LmOptions::default(),
        );
        // Var(slope) = σ² / Σ(x - x̄)².
        let cov = res.covariance.unwrap();
        assert_relative_eq!(cov[(1, 1)], s * s / 10.0, max_relative = 1e-6);
        assert_relative_eq!(res.params[1], 1.96, max_relative = 1e-9);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let res = minimize(|_| DVector::from_element(3, f64::NAN), &[1.0], &LmOptions::default());
        assert!(!res.converged);
    }
}
