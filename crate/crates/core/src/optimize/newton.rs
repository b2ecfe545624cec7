//! Newton iterations with a fixed, precomputed Hessian.
//!
//! Suited to refitting perturbed versions of a problem (for example
//! bootstrap replicates) whose curvature at the optimum is close to that of
//! the original fit.

use nalgebra::{DMatrix, DVector};

use super::numdiff::{numerical_gradient, StepRule};
use super::simplex::OptimResult;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_iter: usize,
    /// Stop once half the Newton decrement `g' H^-1 g` falls below this.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { max_iter: 25, tol: 1e-6, max_halvings: 12 }
    }
}

/// Minimizes `f` from `x0` by backtracking steps `-H^-1 g` with central
/// difference gradients. Returns `None` if `hessian` is not positive
/// definite, a step fails to decrease `f`, or the iteration budget runs out.
pub fn fixed_hessian_newton<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    hessian: &DMatrix<f64>,
    cfg: &NewtonConfig,
) -> Option<OptimResult> {
    let n = x0.len();
    let chol = hessian.clone().cholesky()?;
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut evals = 1;
    let mut trace = vec![fx];
    if !fx.is_finite() {
        return None;
    }
    for _ in 0..cfg.max_iter {
        let g = DVector::from_vec(numerical_gradient(&f, &x, StepRule::default()).ok()?);
        evals += 2 * n;
        let d = -chol.solve(&g);
        let decrement = -g.dot(&d);
        if decrement / 2.0 < cfg.tol {
            return Some(OptimResult {
                f: fx,
                evals,
                converged: true,
                f_spread: decrement / 2.0,
                grad_norm: Some(g.norm()),
                trace,
                x,
            });
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = x.iter().zip(d.iter()).map(|(xi, di)| xi + t * di).collect();
            let ft = f(&trial);
            evals += 1;
            if ft.is_finite() && ft < fx {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            t /= 2.0;
        }
        if !accepted {
            return None;
        }
        trace.push(fx);
    }
    None
}
