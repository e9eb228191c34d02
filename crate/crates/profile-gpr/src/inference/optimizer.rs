//! Quasi-Newton maximizer used by the empirical-Bayes engine.
//!
//! BFGS with an Armijo backtracking line search, written directly against
//! closures returning (value, gradient). The problem sizes here are tiny
//! (at most seven hyperparameters), so the dense inverse-Hessian update is
//! the right tool.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Armijo sufficient-decrease constant.
const C1: f64 = 1e-4;
/// Backtracking shrink factor.
const SHRINK: f64 = 0.5;
/// Give up on a line search below this step size.
const MIN_STEP: f64 = 1e-18;

/// What the maximizer needs from an objective. Line-search trial points
/// only ever ask for the value, so an implementation with a cheap
/// gradient-free path (like the marginal likelihood, which can skip its
/// per-parameter derivative matrices) saves most of the work. Any closure
/// returning (value, gradient) is accepted and simply pays full price for
/// both queries.
pub trait Objective {
    fn value(&self, z: &[f64]) -> Result<f64>;
    fn value_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn value(&self, z: &[f64]) -> Result<f64> {
        self(z).map(|(v, _)| v)
    }

    fn value_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(z)
    }
}

#[derive(Debug, Clone)]
pub struct MaximizeResult {
    pub z: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximize `f` from `z0`; stops when the gradient max-norm drops below
/// `grad_tol` or after `max_iter` iterations.
///
/// `f` may fail (e.g. a Cholesky breakdown at an extreme trial point);
/// failures during the line search are treated as minus infinity and
/// backtracked past, while a failure at the starting point is propagated.
pub fn maximize<O>(f: O, z0: &[f64], max_iter: usize, grad_tol: f64) -> Result<MaximizeResult>
where
    O: Objective,
{
    let d = z0.len();
    if d == 0 {
        return Err(Error::invalid("maximize", "empty parameter vector"));
    }
    // Minimize the negation with textbook BFGS.
    let eval_grad = |z: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let (v, g) = f.value_grad(z.as_slice())?;
        if !v.is_finite() {
            return Err(Error::Numerical(format!("objective value {v} not finite")));
        }
        Ok((-v, -DVector::from_column_slice(&g)))
    };
    let eval_value = |z: &DVector<f64>| -> Result<f64> {
        let v = f.value(z.as_slice())?;
        if !v.is_finite() {
            return Err(Error::Numerical(format!("objective value {v} not finite")));
        }
        Ok(-v)
    };

    let mut x = DVector::from_column_slice(z0);
    let (mut fx, mut gx) = eval_grad(&x)?;
    let mut h = DMatrix::<f64>::identity(d, d);
    let mut iterations = 0;
    let mut converged = gx.amax() < grad_tol;

    while !converged && iterations < max_iter {
        iterations += 1;
        let mut dir = -(&h * &gx);
        let mut slope = gx.dot(&dir);
        if !(slope < 0.0) {
            // Curvature information went bad; fall back to steepest descent.
            h = DMatrix::identity(d, d);
            dir = -gx.clone();
            slope = gx.dot(&dir);
            if !(slope < 0.0) {
                break; // zero gradient to machine precision
            }
        }

        // Backtrack on values alone; the gradient is only computed once a
        // step passes the sufficient-decrease test.
        let mut t = 1.0;
        let mut accepted = None;
        while t >= MIN_STEP {
            let cand = &x + t * &dir;
            match eval_value(&cand) {
                Ok(fc) if fc <= fx + C1 * t * slope => {
                    // The gradient can still fail on the edge of the stable
                    // region even when the value does not; back off then too.
                    match eval_grad(&cand) {
                        Ok((f_new, g_new)) => {
                            accepted = Some((cand, f_new, g_new));
                            break;
                        }
                        Err(_) => t *= SHRINK,
                    }
                }
                _ => t *= SHRINK,
            }
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break; // line search exhausted; gradient is numerically noisy
        };

        let s = &x_new - &x;
        let yv = &g_new - &gx;
        let sy = s.dot(&yv);
        // Skip the update when curvature is too weak to invert stably.
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H <- (I - rho s y')H(I - rho y s') + rho s s', expanded.
            let sh = &s * hy.transpose();
            h = &h - (&sh + sh.transpose()) * rho
                + (&s * s.transpose()) * (rho * rho * yhy + rho);
        }

        x = x_new;
        fx = f_new;
        gx = g_new;
        converged = gx.amax() < grad_tol;
    }

    Ok(MaximizeResult {
        z: x.as_slice().to_vec(),
        value: -fx,
        grad_inf_norm: gx.amax(),
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        // f(z) = -(z0-3)^2 - 2(z1+1)^2, maximum at (3, -1).
        let f = |z: &[f64]| {
            let v = -(z[0] - 3.0).powi(2) - 2.0 * (z[1] + 1.0).powi(2);
            Ok((v, vec![-2.0 * (z[0] - 3.0), -4.0 * (z[1] + 1.0)]))
        };
        let r = maximize(f, &[0.0, 0.0], 500, 1e-6).unwrap();
        assert!(r.converged, "grad norm {}", r.grad_inf_norm);
        assert!((r.z[0] - 3.0).abs() < 1e-6 && (r.z[1] + 1.0).abs() < 1e-6, "{:?}", r.z);
        assert!(r.iterations < 50);
    }

    #[test]
    fn rosenbrock_valley() {
        // Maximize the negated Rosenbrock function; optimum (1, 1).
        let f = |z: &[f64]| {
            let (a, b) = (z[0], z[1]);
            let v = -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
            let ga = -(-2.0 * (1.0 - a) - 400.0 * a * (b - a * a));
            let gb = -(200.0 * (b - a * a));
            Ok((v, vec![ga, gb]))
        };
        for start in [[-1.2, 1.0], [0.0, 0.0], [2.0, 2.0]] {
            let r = maximize(f, &start, 500, 1e-6).unwrap();
            assert!(r.converged, "from {start:?}: grad {}", r.grad_inf_norm);
            assert!(
                (r.z[0] - 1.0).abs() < 1e-5 && (r.z[1] - 1.0).abs() < 1e-5,
                "from {start:?}: {:?} after {} iters",
                r.z,
                r.iterations
            );
        }
    }

    #[test]
    fn iteration_cap_respected() {
        // Rosenbrock needs far more than two steps, so the cap must bind.
        let f = |z: &[f64]| {
            let (a, b) = (z[0], z[1]);
            let v = -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
            let ga = -(-2.0 * (1.0 - a) - 400.0 * a * (b - a * a));
            let gb = -(200.0 * (b - a * a));
            Ok((v, vec![ga, gb]))
        };
        let r = maximize(f, &[-1.2, 1.0], 2, 1e-12).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn failure_regions_are_backtracked() {
        // Objective errors for z > 1.5; maximum sits at 1.0 inside the
        // feasible region, reached from 0 despite overshooting proposals.
        let f = |z: &[f64]| {
            if z[0] > 1.5 {
                return Err(Error::Numerical("blew up".into()));
            }
            Ok((-(z[0] - 1.0).powi(2), vec![-2.0 * (z[0] - 1.0)]))
        };
        let r = maximize(f, &[0.0], 500, 1e-8).unwrap();
        assert!((r.z[0] - 1.0).abs() < 1e-7, "{:?}", r.z);
    }

    #[test]
    fn initial_failure_propagates() {
        let f = |_: &[f64]| -> Result<(f64, Vec<f64>)> { Err(Error::Numerical("bad".into())) };
        assert!(maximize(f, &[0.0], 10, 1e-6).is_err());
        let g = |z: &[f64]| Ok((z[0], vec![1.0]));
        assert!(maximize(g, &[], 10, 1e-6).is_err());
    }

    #[test]
    fn already_converged_start() {
        let f = |z: &[f64]| Ok((-(z[0]).powi(2), vec![-2.0 * z[0]]));
        let r = maximize(f, &[0.0], 100, 1e-6).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
    }
}
