//! Levenberg-Marquardt least squares with optional box/positivity bounds.
//!
//! Bounds are enforced by smooth variable transforms (logistic for a box,
//! exponential for one-sided bounds) so the inner iteration stays
//! unconstrained. Uncertainties are reported in external parameter space
//! from the scaled covariance (J^T J)^-1 * s^2 at the solution.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Per-parameter constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Free,
    Lower(f64),
    Upper(f64),
    Box(f64, f64),
}

impl Bound {
    /// External parameter from the internal unconstrained one.
    fn to_external(self, u: f64) -> f64 {
        match self {
            Bound::Free => u,
            Bound::Lower(l) => l + u.exp(),
            Bound::Upper(h) => h - u.exp(),
            Bound::Box(l, h) => l + (h - l) * logistic(u),
        }
    }

    /// Internal coordinate for a given external value, clamped strictly
    /// inside the feasible region.
    fn to_internal(self, x: f64) -> f64 {
        match self {
            Bound::Free => x,
            Bound::Lower(l) => (x - l).max(1e-12).ln(),
            Bound::Upper(h) => (h - x).max(1e-12).ln(),
            Bound::Box(l, h) => {
                let t = ((x - l) / (h - l)).clamp(1e-9, 1.0 - 1e-9);
                (t / (1.0 - t)).ln()
            }
        }
    }

    /// d(external)/d(internal).
    fn derivative(self, u: f64) -> f64 {
        match self {
            Bound::Free => 1.0,
            Bound::Lower(_) => u.exp(),
            Bound::Upper(_) => -u.exp(),
            Bound::Box(l, h) => {
                let s = logistic(u);
                (h - l) * s * (1.0 - s)
            }
        }
    }

    fn clamp_inside(self, x: f64) -> f64 {
        match self {
            Bound::Free => x,
            Bound::Lower(l) => x.max(l + 1e-12),
            Bound::Upper(h) => x.min(h - 1e-12),
            Bound::Box(l, h) => x.clamp(l + (h - l) * 1e-9, h - (h - l) * 1e-9),
        }
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Residual weighting used by the model fits on count data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    Plain,
    /// Poisson-motivated 1/sqrt(max(y, 1)) weights.
    #[default]
    PoissonLike,
}

impl Weighting {
    pub fn weight(self, y: f64) -> f64 {
        match self {
            Weighting::Plain => 1.0,
            Weighting::PoissonLike => 1.0 / y.max(1.0).sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub step_tol: f64,
    pub grad_tol: f64,
    /// Relative cost-decrease tolerance: an accepted step improving the cost
    /// by less than this fraction ends the iteration.
    pub cost_tol: f64,
    pub initial_damping: f64,
    pub bounds: Option<Vec<Bound>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            step_tol: 1e-10,
            grad_tol: 1e-10,
            cost_tol: 1e-9,
            initial_damping: 1e-3,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// 1-sigma uncertainties from the scaled covariance.
    pub sigma: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Accepted cost values, 0.5 * ||r||^2, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub model: String,
    pub data_digest: String,
    pub flags: Vec<String>,
}

impl FitResult {
    pub fn flagged(params: Vec<f64>, model: &str, flag: &str) -> Self {
        let n = params.len();
        FitResult {
            params,
            sigma: vec![f64::INFINITY; n],
            residual_norm: f64::NAN,
            iterations: 0,
            converged: false,
            cost_history: Vec::new(),
            model: model.to_string(),
            data_digest: String::new(),
            flags: vec![flag.to_string()],
        }
    }
}

/// Central finite-difference Jacobian with per-parameter relative step.
pub fn finite_difference_jacobian<F>(f: &F, params: &[f64], rel_step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = params.len();
    let m = f(params).len();
    let mut jac = DMatrix::zeros(m, n);
    let mut p = params.to_vec();
    for j in 0..n {
        let h = rel_step * params[j].abs().max(1e-2);
        p[j] = params[j] + h;
        let rp = f(&p);
        p[j] = params[j] - h;
        let rm = f(&p);
        p[j] = params[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimize 0.5 * ||r(theta)||^2 over theta.
///
/// `jacobian`, when provided, must return d r_i / d theta_j in external
/// parameter space. Without it, central finite differences with relative
/// step 1e-6 are used.
pub fn levenberg_marquardt<F>(
    residuals: F,
    jacobian: Option<&dyn Fn(&[f64]) -> DMatrix<f64>>,
    init: &[f64],
    opts: &FitOptions,
) -> FitResult
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = init.len();
    let bounds = opts
        .bounds
        .clone()
        .unwrap_or_else(|| vec![Bound::Free; n]);
    assert_eq!(bounds.len(), n, "one bound per parameter");

    let theta_of = |u: &[f64]| -> Vec<f64> {
        u.iter().zip(&bounds).map(|(&ui, b)| b.to_external(ui)).collect()
    };
    let jac_theta = |theta: &[f64]| -> DMatrix<f64> {
        match jacobian {
            Some(j) => j(theta),
            None => finite_difference_jacobian(&residuals, theta, 1e-6),
        }
    };

    let mut u: Vec<f64> = init
        .iter()
        .zip(&bounds)
        .map(|(&x, b)| b.to_internal(b.clamp_inside(x)))
        .collect();
    let mut theta = theta_of(&u);
    let mut r = DVector::from_vec(residuals(&theta));
    let m = r.len();
    let mut cost = 0.5 * r.norm_squared();
    let mut cost_history = vec![cost];

    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iterations {
        iterations = iter;
        let jt = jac_theta(&theta);
        // chain rule to internal coordinates
        let mut ju = jt.clone();
        for j in 0..n {
            let d = bounds[j].derivative(u[j]);
            for i in 0..m {
                ju[(i, j)] *= d;
            }
        }
        let a = ju.transpose() * &ju;
        let g = ju.transpose() * &r;

        if g.amax() <= opts.grad_tol * (1.0 + cost) {
            converged = true;
            break;
        }

        let mut accepted = false;
        // try the undamped Gauss-Newton step first, then grow the damping
        let mut lambda_try = 0.0f64;
        loop {
            let mut damped = a.clone();
            let floor = a.diagonal().amax().max(1e-300);
            for j in 0..n {
                damped[(j, j)] += lambda_try * a[(j, j)].max(1e-12 * floor);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda_try = if lambda_try == 0.0 { lambda } else { lambda_try * 10.0 };
                    lambda = lambda_try.max(lambda);
                    if lambda_try > 1e15 {
                        break;
                    }
                    continue;
                }
            };
            let u_trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let theta_trial = theta_of(&u_trial);
            if theta_trial.iter().any(|x| !x.is_finite()) {
                lambda_try = if lambda_try == 0.0 { lambda } else { lambda_try * 4.0 };
                lambda = lambda_try.max(lambda);
                if lambda_try > 1e15 {
                    break;
                }
                continue;
            }
            let r_trial = DVector::from_vec(residuals(&theta_trial));
            let cost_trial = 0.5 * r_trial.norm_squared();
            if cost_trial.is_finite() && cost_trial < cost {
                let u_norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                let small_step = step.norm() <= opts.step_tol * (u_norm + opts.step_tol)
                    || cost - cost_trial <= opts.cost_tol * cost.max(f64::MIN_POSITIVE);
                u = u_trial;
                theta = theta_trial;
                r = r_trial;
                cost = cost_trial;
                cost_history.push(cost);
                lambda = (lambda_try.max(lambda) / 3.0).max(1e-14);
                accepted = true;
                if small_step {
                    converged = true;
                }
                break;
            }
            lambda_try = if lambda_try == 0.0 { lambda } else { lambda_try * 4.0 };
            lambda = lambda_try.max(lambda);
            if lambda_try > 1e15 {
                break;
            }
        }
        if !accepted {
            // damping exhausted without any descent direction: the iterate
            // is at a numerical stationary point of the cost
            converged = iter > 1 || g.amax() <= opts.grad_tol.sqrt() * (1.0 + cost);
            break;
        }
        if converged {
            break;
        }
    }

    // covariance in external space
    let jt = jac_theta(&theta);
    let scale = if m > n { 2.0 * cost / (m - n) as f64 } else { 1.0 };
    let sigma = covariance_sigma(&jt, scale);

    FitResult {
        params: theta,
        sigma,
        residual_norm: (2.0 * cost).sqrt(),
        iterations,
        converged,
        cost_history,
        model: String::new(),
        data_digest: String::new(),
        flags: Vec::new(),
    }
}

fn covariance_sigma(jac: &DMatrix<f64>, scale: f64) -> Vec<f64> {
    let n = jac.ncols();
    if jac.iter().any(|x| !x.is_finite()) {
        return vec![f64::INFINITY; n];
    }
    let a = jac.transpose() * jac;
    // bounded-iteration SVD: nalgebra's unbounded variant can spin on
    // ill-conditioned input
    let svd = match a.clone().try_svd(true, true, f64::EPSILON, 1000) {
        Some(svd) => svd,
        None => return vec![f64::INFINITY; n],
    };
    let tol = svd.singular_values.amax() * 1e-14;
    let mut inv_diag = vec![0.0f64; n];
    if let (Some(u), Some(vt)) = (&svd.u, &svd.v_t) {
        for i in 0..n {
            for k in 0..n {
                let s = svd.singular_values[k];
                let si = if s > tol { 1.0 / s } else { 1e30 };
                inv_diag[i] += vt[(k, i)] * si * u[(i, k)];
            }
        }
    }
    inv_diag
        .iter()
        .map(|&c| (c.max(0.0) * scale).sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_model_recovers_slope_fast() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x).collect();
        let res = levenberg_marquardt(
            |p| xs.iter().zip(&ys).map(|(x, y)| p[0] * x - y).collect(),
            None,
            &[0.0],
            &FitOptions::default(),
        );
        assert!(res.converged);
        assert!(res.iterations <= 3, "iterations = {}", res.iterations);
        assert_relative_eq!(res.params[0], 2.5, max_relative = 1e-12);
    }

    #[test]
    fn rosenbrock_residuals_converge() {
        // r = (10 (y - x^2), 1 - x), minimum at (1, 1)
        let res = levenberg_marquardt(
            |p| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]],
            None,
            &[-1.2, 1.0],
            &FitOptions { max_iterations: 500, ..Default::default() },
        );
        assert!(res.converged);
        assert!((res.params[0] - 1.0).abs() < 1e-8, "x = {}", res.params[0]);
        assert!((res.params[1] - 1.0).abs() < 1e-8, "y = {}", res.params[1]);
    }

    #[test]
    fn cost_history_is_monotone() {
        let res = levenberg_marquardt(
            |p| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]],
            None,
            &[-1.2, 1.0],
            &FitOptions::default(),
        );
        for w in res.cost_history.windows(2) {
            assert!(w[1] <= w[0], "cost increased: {:?}", w);
        }
    }

    #[test]
    fn bounds_are_respected() {
        // unconstrained minimum at p = -3, bounded to p >= 0
        let res = levenberg_marquardt(
            |p| vec![p[0] + 3.0],
            None,
            &[1.0],
            &FitOptions {
                bounds: Some(vec![Bound::Lower(0.0)]),
                max_iterations: 500,
                ..Default::default()
            },
        );
        assert!(res.params[0] >= 0.0);
        assert!(res.params[0] < 1e-3, "p = {}", res.params[0]);
    }

    #[test]
    fn max_iterations_flags_nonconvergence() {
        let res = levenberg_marquardt(
            |p| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]],
            None,
            &[-1.2, 1.0],
            &FitOptions { max_iterations: 2, ..Default::default() },
        );
        assert!(!res.converged);
        assert_eq!(res.iterations, 2);
    }

    #[test]
    fn bound_transforms_roundtrip() {
        for b in [Bound::Free, Bound::Lower(2.0), Bound::Upper(5.0), Bound::Box(-1.0, 4.0)] {
            for x in [-0.5, 0.1, 1.3, 3.9] {
                let xc = b.clamp_inside(x);
                let u = b.to_internal(xc);
                assert_relative_eq!(b.to_external(u), xc, max_relative = 1e-9);
            }
        }
    }
}
