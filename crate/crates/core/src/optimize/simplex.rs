//! Nelder–Mead simplex minimization with jittered restarts.
//!
//! Uses the dimension-adaptive reflection/expansion/contraction/shrink
//! coefficients, which behave much better than the classic (1, 2, 1/2, 1/2)
//! set beyond a handful of parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

use super::numdiff::{numerical_gradient, StepRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Evaluation budget for each simplex run.
    pub max_evals: usize,
    /// Simplex diameter (max-norm from the best vertex) for termination.
    pub x_tol: f64,
    /// Spread of function values across the simplex for termination.
    pub f_tol: f64,
    /// Extra runs restarted from the incumbent best point.
    pub restarts: usize,
    pub seed: u64,
    /// Initial edge length, relative to `max(1, |x_k|)`.
    pub initial_step: f64,
    /// Gradient-norm threshold for declaring convergence.
    pub grad_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_evals: 20_000,
            x_tol: 1e-8,
            f_tol: 1e-9,
            restarts: 3,
            seed: 0,
            initial_step: 0.1,
            grad_tol: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::InvalidParameter("cannot optimize over zero parameters".into()));
        }
        if self.max_evals < dim + 2 {
            return Err(Error::InvalidParameter(format!(
                "max_evals {} below dimension + 2 = {}",
                self.max_evals,
                dim + 2
            )));
        }
        if !(self.x_tol > 0.0 && self.f_tol > 0.0 && self.grad_tol > 0.0 && self.initial_step > 0.0) {
            return Err(Error::InvalidParameter("optimizer tolerances and step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
    /// Spread of the final simplex of the run that produced `x`.
    pub f_spread: f64,
    /// Gradient norm at `x`; `None` if differencing hit a non-finite value.
    pub grad_norm: Option<f64>,
    /// Best value after each run.
    pub trace: Vec<f64>,
}

struct Counted<'a, F> {
    f: &'a F,
    evals: usize,
}

impl<F: Fn(&[f64]) -> f64> Counted<'_, F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

struct RunOutcome {
    x: Vec<f64>,
    f: f64,
    spread: f64,
}

fn simplex_run<F: Fn(&[f64]) -> f64>(
    obj: &mut Counted<'_, F>,
    x0: &[f64],
    f0: f64,
    cfg: &OptimizerConfig,
) -> RunOutcome {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, beta, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let budget = obj.evals + cfg.max_evals;

    let mut pts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    pts.push((x0.to_vec(), f0));
    for k in 0..n {
        let step = cfg.initial_step * x0[k].abs().max(1.0);
        let mut x = x0.to_vec();
        x[k] += step;
        let mut fx = obj.call(&x);
        if !fx.is_finite() {
            x[k] = x0[k] - step;
            fx = obj.call(&x);
        }
        pts.push((x, fx));
    }

    let mut centroid = vec![0.0; n];
    let trial = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> { c.iter().zip(w).map(|(ci, wi)| ci + t * (wi - ci)).collect() };
    loop {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = pts[n].1 - pts[0].1;
        let diameter = pts[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&pts[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (spread <= cfg.f_tol && diameter <= cfg.x_tol) || obj.evals >= budget {
            return RunOutcome { x: pts[0].0.clone(), f: pts[0].1, spread };
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (x, _) in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let worst = pts[n].0.clone();
        let f_worst = pts[n].1;
        let xr = trial(&centroid, &worst, -alpha);
        let fr = obj.call(&xr);

        if fr < pts[0].1 {
            let xe = trial(&centroid, &worst, -alpha * gamma);
            let fe = obj.call(&xe);
            pts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < pts[n - 1].1 {
            pts[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < f_worst {
            let xc = trial(&centroid, &xr, beta);
            let fc = obj.call(&xc);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = trial(&centroid, &worst, beta);
            let fc = obj.call(&xc);
            let ok = fc < f_worst;
            (xc, fc, ok)
        };
        if accept {
            pts[n] = (xc, fc);
            continue;
        }
        let best = pts[0].0.clone();
        for p in pts.iter_mut().skip(1) {
            p.0 = best.iter().zip(&p.0).map(|(b, x)| b + delta * (x - b)).collect();
            p.1 = obj.call(&p.0);
        }
    }
}

/// Minimizes `f` from `x0`; the best point over all runs is returned.
///
/// Non-finite values count as `+inf`. If `f(x0)` is not finite, jittered
/// copies of `x0` are tried before giving up.
pub fn simplex_minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptimResult> {
    cfg.validate(x0.len())?;
    let mut rng = rng_from(cfg.seed, &[0x51_4D_50]);
    let mut obj = Counted { f: &f, evals: 0 };

    const INIT_ATTEMPTS: usize = 20;
    let mut start = x0.to_vec();
    let mut f_start = obj.call(&start);
    let mut attempt = 1;
    while !f_start.is_finite() {
        if attempt == INIT_ATTEMPTS {
            return Err(Error::Initialization { attempts: INIT_ATTEMPTS });
        }
        let scale = 0.1 * attempt as f64;
        start = x0.iter().map(|&v| v * (1.0 + rng.random_range(-scale..scale)) + rng.random_range(-scale..scale)).collect();
        f_start = obj.call(&start);
        attempt += 1;
    }

    let first = simplex_run(&mut obj, &start, f_start, cfg);
    let (mut best_x, mut best_f, mut spread) = (first.x, first.f, first.spread);
    if f_start < best_f {
        best_x = start.clone();
        best_f = f_start;
    }
    let mut trace = vec![best_f];

    for _ in 0..cfg.restarts {
        let jittered: Vec<f64> = best_x.iter().map(|&v| v * (1.0 + rng.random_range(-0.1..0.1))).collect();
        let f_j = obj.call(&jittered);
        let (from, f_from) = if f_j.is_finite() { (jittered, f_j) } else { (best_x.clone(), best_f) };
        let run = simplex_run(&mut obj, &from, f_from, cfg);
        let improvement = best_f - run.f;
        if run.f < best_f {
            best_x = run.x;
            best_f = run.f;
            spread = run.spread;
        }
        trace.push(best_f);
        if improvement.abs() <= cfg.f_tol.max(1e-12 * best_f.abs()) {
            break;
        }
    }

    let grad_norm = numerical_gradient(obj.f, &best_x, StepRule::default())
        .ok()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt());
    let evals = obj.evals + 2 * best_x.len();
    let converged = spread <= cfg.f_tol && grad_norm.is_some_and(|g| g < cfg.grad_tol);
    Ok(OptimResult { x: best_x, f: best_f, evals, converged, f_spread: spread, grad_norm, trace })
}
