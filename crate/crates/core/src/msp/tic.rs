//! Takeuchi information criterion for pairwise-likelihood fits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::optimize::numdiff::{condition_number, numerical_hessian, numerical_jacobian, StepRule};

use super::likelihood::PairwiseLikelihood;
use super::params::ParamLayout;
use super::{DistanceMode, MspModel};

/// Hessians with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TicReport {
    pub tic: f64,
    pub nll: f64,
    /// `tr(J H^-1)`, the effective number of parameters.
    pub penalty: f64,
    pub n_params: usize,
    pub condition_number: f64,
}

/// `tr(J H^-1)` with a conditioning check on `H`.
pub fn information_penalty(j: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<(f64, f64)> {
    if j.shape() != h.shape() || !h.is_square() {
        return Err(Error::DimensionMismatch("J and H must be square and of equal size".into()));
    }
    let condition = condition_number(h);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularInformation { condition });
    }
    let h_inv = h.clone().try_inverse().ok_or(Error::SingularInformation { condition })?;
    Ok(((j * h_inv).trace(), condition))
}

/// Score covariance times the (weighted) number of years.
fn score_variability(scores: &[Vec<f64>], weights: Option<&[f64]>, p: usize) -> Result<DMatrix<f64>> {
    let n_years = scores.first().map_or(0, Vec::len);
    let w = |y: usize| weights.map_or(1.0, |w| w[y]);
    let n: f64 = (0..n_years).map(w).sum();
    if n < 2.0 {
        return Err(Error::InsufficientData { needed: 2, got: n as usize });
    }
    let mean: Vec<f64> = scores.iter().map(|s| (0..n_years).map(|y| w(y) * s[y]).sum::<f64>() / n).collect();
    let mut j = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let c: f64 = (0..n_years)
                .map(|y| w(y) * (scores[a][y] - mean[a]) * (scores[b][y] - mean[b]))
                .sum::<f64>()
                / (n - 1.0);
            j[(a, b)] = c * n;
            j[(b, a)] = c * n;
        }
    }
    Ok(j)
}

/// TIC at a fitted point, with derivatives taken on the layout's
/// transformed scale (the penalty is invariant to reparametrization at an
/// optimum).
pub fn tic_with_layout(lik: &PairwiseLikelihood, layout: &ParamLayout, model: &MspModel, fitted_nll: f64) -> Result<TicReport> {
    let theta = layout.to_vector(model)?;
    let p = theta.len();
    let rule = StepRule::default();
    let scores = numerical_jacobian(
        |v: &[f64]| layout.to_model(v).ok().and_then(|m| lik.per_year_loglik(&m).ok()),
        &theta,
        rule,
    )?;
    // rows of `scores` are years; transpose to one row per parameter
    let n_years = scores.len();
    let by_param: Vec<Vec<f64>> = (0..p).map(|k| (0..n_years).map(|y| scores[y][k]).collect()).collect();
    let j = score_variability(&by_param, lik.year_weights(), p)?;
    let h = numerical_hessian(
        |v: &[f64]| layout.to_model(v).and_then(|m| lik.nll(&m)).unwrap_or(f64::NAN),
        &theta,
        rule,
    )?;
    let (penalty, condition_number) = information_penalty(&j, &h.matrix)?;
    Ok(TicReport { tic: 2.0 * fitted_nll + 2.0 * penalty, nll: fitted_nll, penalty, n_params: p, condition_number })
}

/// TIC of `model` on `data` using normalized-coordinate distances.
pub fn tic(data: &Dataset, model: &MspModel, fitted_nll: f64) -> Result<TicReport> {
    let layout = ParamLayout::for_data(model.trend.term_set("model"), model.dep.kind, data)?;
    let lik = PairwiseLikelihood::new(data, DistanceMode::Normalized)?;
    tic_with_layout(&lik, &layout, model, fitted_nll)
}
