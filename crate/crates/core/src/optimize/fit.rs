//! End-to-end MSP fitting with TIC-based term-set selection.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gev::fit_lmoments;
use crate::msp::params::ParamLayout;
use crate::msp::tic::tic_with_layout;
use crate::msp::{
    site_distance, DependenceKind, DependenceModel, DistanceMode, MspModel, PairwiseLikelihood, TermSet,
};
use crate::rng::derive_seed;

use super::simplex::{simplex_minimize, OptimResult, OptimizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TicRow {
    pub term_set: String,
    pub nll: Option<f64>,
    pub tic: Option<f64>,
    pub penalty: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub term_set: String,
    pub model: MspModel,
    pub nll: f64,
    pub tic: Option<f64>,
    pub evals: usize,
    pub converged: bool,
    /// Condition number of the NLL Hessian, when TIC was computed.
    pub condition_number: Option<f64>,
    pub tic_table: Vec<TicRow>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn least_squares(design: &DMatrix<f64>, y: &[f64]) -> Option<Vec<f64>> {
    let svd = design.clone().svd(true, true);
    let beta = svd.solve(&DVector::from_column_slice(y), 1e-10).ok()?;
    beta.iter().all(|b| b.is_finite()).then(|| beta.iter().copied().collect())
}

/// Starting model from per-site L-moment fits regressed onto the term set.
pub fn initial_model(data: &Dataset, terms: &TermSet, kind: DependenceKind, distance: DistanceMode) -> Result<MspModel> {
    let sites = data.sites();
    let fits: Vec<(usize, crate::gev::GevParams)> = (0..data.n_sites())
        .filter_map(|s| fit_lmoments(&data.column(s)).ok().map(|p| (s, p)))
        .collect();
    if fits.is_empty() {
        return Err(Error::FitFailure("no site admits a marginal GEV fit".into()));
    }
    let mean = |f: &dyn Fn(&crate::gev::GevParams) -> f64| fits.iter().map(|(_, p)| f(p)).sum::<f64>() / fits.len() as f64;
    let (mu_bar, sigma_bar) = (mean(&|p| p.mu), mean(&|p| p.sigma));

    let regress = |basis: &[crate::msp::BasisTerm], target: &dyn Fn(&crate::gev::GevParams) -> f64, fallback: f64| {
        let design = DMatrix::from_fn(fits.len(), basis.len(), |r, c| basis[c].eval(&sites[fits[r].0]));
        let y: Vec<f64> = fits.iter().map(|(_, p)| target(p)).collect();
        let mut constant = vec![0.0; basis.len()];
        constant[0] = fallback;
        if fits.len() < basis.len() {
            return constant;
        }
        least_squares(&design, &y).unwrap_or(constant)
    };
    let mu = regress(&terms.mu, &|p| p.mu, mu_bar);
    let mut sigma = regress(&terms.sigma, &|p| p.sigma, sigma_bar);
    let surface_ok = |sigma: &[f64]| {
        sites.iter().all(|s| terms.sigma.iter().zip(sigma).map(|(t, c)| c * t.eval(s)).sum::<f64>() > 0.0)
    };
    if !surface_ok(&sigma) || sigma[0] <= 0.0 {
        sigma = vec![0.0; terms.sigma.len()];
        sigma[0] = sigma_bar;
    }
    let xi = median(fits.iter().map(|(_, p)| p.xi).collect());

    let mut dists = Vec::new();
    for i in 0..sites.len() {
        for j in i + 1..sites.len() {
            dists.push(site_distance(&sites[i], &sites[j], distance)?);
        }
    }
    let tau = dists.is_empty().then_some(1.0).unwrap_or_else(|| median(dists)).max(1e-3);
    Ok(MspModel { trend: terms.surface(&mu, &sigma, xi)?, dep: DependenceModel::new(kind, tau, 1.0)? })
}

/// Minimizes the pairwise NLL from `start`; falls back to a Gumbel-shaped
/// start when `start` leaves data outside the support.
pub fn minimize_nll(
    lik: &PairwiseLikelihood,
    layout: &ParamLayout,
    start: &MspModel,
    cfg: &OptimizerConfig,
) -> Result<(MspModel, OptimResult)> {
    let objective = |v: &[f64]| layout.to_model(v).and_then(|m| lik.nll(&m)).unwrap_or(f64::INFINITY);
    let mut x0 = layout.to_vector(start)?;
    if !objective(&x0).is_finite() {
        let mut gumbel = start.clone();
        gumbel.trend.xi = 0.0;
        let alt = layout.to_vector(&gumbel)?;
        if objective(&alt).is_finite() {
            x0 = alt;
        }
    }
    let result = simplex_minimize(objective, &x0, cfg)?;
    Ok((layout.to_model(&result.x)?, result))
}

struct SetFit {
    model: MspModel,
    opt: OptimResult,
    tic: Result<crate::msp::TicReport>,
}

fn fit_one(data: &Dataset, lik: &PairwiseLikelihood, kind: DependenceKind, terms: &TermSet, cfg: &OptimizerConfig) -> Result<SetFit> {
    let start = initial_model(data, terms, kind, DistanceMode::Normalized)?;
    let layout = ParamLayout::for_data(terms.clone(), kind, data)?;
    let (model, opt) = minimize_nll(lik, &layout, &start, cfg)?;
    let tic = tic_with_layout(lik, &layout, &model, opt.f);
    Ok(SetFit { model, opt, tic })
}

/// Fits a single term set without computing TIC.
pub fn fit_term_set(data: &Dataset, kind: DependenceKind, terms: &TermSet, cfg: &OptimizerConfig) -> Result<(MspModel, OptimResult)> {
    let lik = PairwiseLikelihood::new(data, DistanceMode::Normalized)?;
    let start = initial_model(data, terms, kind, DistanceMode::Normalized)?;
    let layout = ParamLayout::for_data(terms.clone(), kind, data)?;
    minimize_nll(&lik, &layout, &start, cfg)
}

/// Fits every term set and returns the minimum-TIC fit (ties to the earlier
/// set). Sets whose TIC cannot be computed are only chosen if none has one.
pub fn fit_msp(data: &Dataset, kind: DependenceKind, term_sets: &[TermSet], cfg: &OptimizerConfig) -> Result<FitReport> {
    if term_sets.is_empty() {
        return Err(Error::InvalidParameter("no term sets to fit".into()));
    }
    let lik = PairwiseLikelihood::new(data, DistanceMode::Normalized)?;
    let fits: Vec<Result<SetFit>> = term_sets
        .par_iter()
        .enumerate()
        .map(|(i, terms)| {
            let worker_cfg = OptimizerConfig { seed: derive_seed(cfg.seed, &[i as u64]), ..*cfg };
            fit_one(data, &lik, kind, terms, &worker_cfg)
        })
        .collect();

    let table: Vec<TicRow> = fits
        .iter()
        .zip(term_sets)
        .map(|(fit, terms)| match fit {
            Ok(f) => TicRow {
                term_set: terms.name.clone(),
                nll: Some(f.opt.f),
                tic: f.tic.as_ref().ok().map(|t| t.tic),
                penalty: f.tic.as_ref().ok().map(|t| t.penalty),
                error: f.tic.as_ref().err().map(|e| e.to_string()),
            },
            Err(e) => TicRow { term_set: terms.name.clone(), nll: None, tic: None, penalty: None, error: Some(e.to_string()) },
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, row) in table.iter().enumerate() {
        if let Some(t) = row.tic {
            if best.is_none_or(|b| table[b].tic.is_none_or(|bt| t < bt)) {
                best = Some(i);
            }
        }
    }
    if best.is_none() {
        best = fits.iter().position(|f| f.is_ok());
    }
    let Some(best) = best else {
        return Err(Error::AllFitsFailed(
            table.iter().map(|r| format!("{}: {}", r.term_set, r.error.as_deref().unwrap_or("unknown"))).collect(),
        ));
    };
    let Ok(fit) = &fits[best] else { unreachable!("selected row has a fit") };
    let tic = fit.tic.as_ref().ok();
    Ok(FitReport {
        term_set: term_sets[best].name.clone(),
        model: fit.model.clone(),
        nll: fit.opt.f,
        tic: tic.map(|t| t.tic),
        evals: fits.iter().filter_map(|f| f.as_ref().ok()).map(|f| f.opt.evals).sum(),
        converged: fit.opt.converged,
        condition_number: tic.map(|t| t.condition_number),
        tic_table: table,
    })
}
