//! Bootstrap-weighted Bayesian model averaging of return levels.
//!
//! Each model's historical run is compared with the reanalysis through
//! paired year-wise bootstrap replicates; the Gaussian discrepancy
//! likelihood of the replicate return levels gives per-site weights, which
//! then combine per-model predictions into a mean and a between/within
//! variance split.

pub mod pipeline;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gev::{fit_lmoments, return_level};
use crate::msp::params::ParamLayout;
use crate::msp::{msp_return_level, DistanceMode, MspModel, PairwiseLikelihood, TermSet};
use crate::optimize::fit::minimize_nll;
use crate::optimize::{fixed_hessian_newton, NewtonConfig, OptimizerConfig};
use crate::rng::{derive_seed, rng_from};

pub use pipeline::{
    compare_pipelines, run_pipeline, BmaConfig, ComparisonRow, DroppedModel, FutureVariance, ModelEntry,
    MspSettings, PeriodEntry, PipelineReport, SiteEntry, SourceInfo, TermSetMode,
};

/// Minimum fraction of successful replicates.
pub const MIN_EFFECTIVE_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    #[serde(rename = "gev-bma")]
    Gev,
    #[serde(rename = "msp-bma")]
    Msp,
}

impl Pipeline {
    pub fn label(&self) -> &'static str {
        match self {
            Pipeline::Gev => "gev-bma",
            Pipeline::Msp => "msp-bma",
        }
    }
}

/// Year indices of `b` resamples drawn with replacement.
pub fn bootstrap_indices(n_years: usize, b: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if b < 1 {
        return Err(Error::Domain("bootstrap size must be at least 1".into()));
    }
    if n_years < 1 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok((0..b)
        .map(|i| {
            let mut rng = rng_from(seed, &[i as u64]);
            (0..n_years).map(|_| rng.random_range(0..n_years)).collect()
        })
        .collect())
}

/// Materialized year-wise resamples: whole cross-site year rows.
pub fn yearwise_bootstrap(data: &Dataset, b: usize, seed: u64) -> Result<Vec<Dataset>> {
    Ok(bootstrap_indices(data.n_years(), b, seed)?.iter().map(|idx| data.select_years(idx)).collect())
}

/// How return levels are estimated from one dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    /// Site-wise L-moment GEV fits.
    Gev,
    /// Pairwise-likelihood MSP fit with fixed terms, started from `start`.
    /// With a Hessian (on the layout's transformed scale, at `start`),
    /// fixed-Hessian Newton is tried before the simplex.
    Msp { start: MspModel, terms: TermSet, optimizer: OptimizerConfig, hessian: Option<DMatrix<f64>> },
}

impl Estimator {
    /// Return levels `[period][site]` on a dataset, optionally with year
    /// multiplicities.
    pub fn levels(&self, data: &Dataset, year_weights: Option<Vec<f64>>, periods: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
        match self {
            Estimator::Gev => {
                let sample = |s: usize| -> Vec<f64> {
                    match &year_weights {
                        None => data.column(s),
                        Some(w) => (0..data.n_years())
                            .flat_map(|y| std::iter::repeat_n(data.value(y, s), w[y] as usize))
                            .collect(),
                    }
                };
                let params = (0..data.n_sites()).map(|s| fit_lmoments(&sample(s))).collect::<Result<Vec<_>>>()?;
                periods.iter().map(|&t| params.iter().map(|p| return_level(t, p)).collect()).collect()
            }
            Estimator::Msp { start, terms, optimizer, hessian } => {
                let layout = ParamLayout::for_data(terms.clone(), start.dep.kind, data)?;
                let mut lik = PairwiseLikelihood::new(data, DistanceMode::Normalized)?;
                if let Some(w) = year_weights {
                    lik = lik.with_year_weights(w)?;
                }
                let newton = hessian.as_ref().and_then(|h| {
                    let objective = |v: &[f64]| layout.to_model(v).and_then(|m| lik.nll(&m)).unwrap_or(f64::INFINITY);
                    let x0 = layout.to_vector(start).ok()?;
                    fixed_hessian_newton(objective, &x0, h, &NewtonConfig::default())
                });
                let model = match newton {
                    Some(r) => layout.to_model(&r.x)?,
                    None => minimize_nll(&lik, &layout, start, &OptimizerConfig { seed, ..*optimizer })?.0,
                };
                periods
                    .iter()
                    .map(|&t| data.sites().iter().map(|s| msp_return_level(t, s, &model)).collect())
                    .collect()
            }
        }
    }
}

/// Replicate return levels for one data source at one return period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEnsemble {
    pub b: usize,
    pub seed: u64,
    pub period: f64,
    /// Per replicate: site return levels, or `None` if the fit failed.
    pub intensities: Vec<Option<Vec<f64>>>,
    /// `(replicate, cause)` for failed replicates.
    pub failures: Vec<(usize, String)>,
}

impl BootstrapEnsemble {
    pub fn effective_b(&self) -> usize {
        self.intensities.iter().filter(|r| r.is_some()).count()
    }

    pub fn site_series(&self, site: usize) -> Vec<f64> {
        self.intensities.iter().flatten().map(|r| r[site]).collect()
    }

    /// Mean and 1/B variance of the successful replicates at a site.
    pub fn moments(&self, site: usize) -> (f64, f64) {
        mean_var(&self.site_series(site))
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

fn year_weights(indices: &[usize], n_years: usize) -> Vec<f64> {
    let mut w = vec![0.0; n_years];
    for &i in indices {
        w[i] += 1.0;
    }
    w
}

/// Return levels of every resample, one ensemble per period. Fails when
/// fewer than 80% of the replicates succeed.
pub fn intensity_series(
    data: &Dataset,
    resamples: &[Vec<usize>],
    seed: u64,
    periods: &[f64],
    estimator: &Estimator,
) -> Result<Vec<BootstrapEnsemble>> {
    use rayon::prelude::*;
    let b = resamples.len();
    let results: Vec<Result<Vec<Vec<f64>>>> = resamples
        .par_iter()
        .enumerate()
        .map(|(i, idx)| estimator.levels(data, Some(year_weights(idx, data.n_years())), periods, derive_seed(seed, &[i as u64])))
        .collect();
    let failures: Vec<(usize, String)> =
        results.iter().enumerate().filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e.to_string()))).collect();
    let effective = b - failures.len();
    if (effective as f64) < MIN_EFFECTIVE_FRACTION * b as f64 {
        return Err(Error::UnstableBootstrap {
            effective,
            requested: b,
            first_failure: failures.first().map(|f| f.1.clone()).unwrap_or_default(),
        });
    }
    Ok(periods
        .iter()
        .enumerate()
        .map(|(p, &period)| BootstrapEnsemble {
            b,
            seed,
            period,
            intensities: results.iter().map(|r| r.as_ref().ok().map(|lv| lv[p].clone())).collect(),
            failures: failures.clone(),
        })
        .collect())
}

/// Log of the Gaussian discrepancy likelihood between paired replicate
/// return levels at one site. Replicates that failed on either side are
/// dropped from both.
pub fn model_likelihood(reanalysis: &BootstrapEnsemble, model: &BootstrapEnsemble, site: usize) -> Result<f64> {
    if reanalysis.b != model.b {
        return Err(Error::DimensionMismatch(format!("bootstrap sizes differ: {} vs {}", reanalysis.b, model.b)));
    }
    let (r, m): (Vec<f64>, Vec<f64>) = reanalysis
        .intensities
        .iter()
        .zip(&model.intensities)
        .filter_map(|(a, b)| Some((a.as_ref()?[site], b.as_ref()?[site])))
        .unzip();
    if (r.len() as f64) < MIN_EFFECTIVE_FRACTION * reanalysis.b as f64 {
        return Err(Error::UnstableBootstrap {
            effective: r.len(),
            requested: reanalysis.b,
            first_failure: "too few replicates succeeded on both sides".into(),
        });
    }
    log_likelihood_from_series(&r, &m)
}

/// `log L` with `sigma_I^2` the 1/B variance of the reanalysis series and
/// the exponent holding the mean squared paired discrepancy.
pub fn log_likelihood_from_series(reanalysis: &[f64], model: &[f64]) -> Result<f64> {
    if reanalysis.len() != model.len() || reanalysis.is_empty() {
        return Err(Error::DimensionMismatch("paired series must be nonempty and of equal length".into()));
    }
    let (_, var) = mean_var(reanalysis);
    if !(var > 0.0) {
        return Err(Error::DegenerateVariance("reanalysis replicate levels have zero variance".into()));
    }
    let msd = reanalysis.iter().zip(model).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / reanalysis.len() as f64;
    Ok(-0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * var.ln() - msd / (2.0 * var))
}

/// Posterior model probabilities by log-sum-exp normalization.
pub fn posterior_weights(log_likelihoods: &[f64], priors: &[f64]) -> Result<Vec<f64>> {
    if log_likelihoods.len() != priors.len() || priors.is_empty() {
        return Err(Error::DimensionMismatch("one prior per model required".into()));
    }
    if priors.iter().any(|p| !(*p >= 0.0)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter("priors must be nonnegative and sum to 1".into()));
    }
    if log_likelihoods.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::InvalidParameter("log likelihoods must be finite or -inf".into()));
    }
    let log_post: Vec<f64> = log_likelihoods.iter().zip(priors).map(|(l, p)| l + p.ln()).collect();
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NoInformation);
    }
    let unnorm: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Ok(unnorm.iter().map(|u| u / total).collect())
}

/// Weighted mean and the between/within variance decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmaMoments {
    pub mean: f64,
    pub between: f64,
    pub within: f64,
    pub total: f64,
}

pub fn bma_combine(means: &[f64], variances: &[f64], weights: &[f64]) -> Result<BmaMoments> {
    if means.len() != variances.len() || means.len() != weights.len() || means.is_empty() {
        return Err(Error::DimensionMismatch("means, variances and weights must have equal nonzero length".into()));
    }
    let mean: f64 = means.iter().zip(weights).map(|(m, w)| m * w).sum();
    let between: f64 = means.iter().zip(weights).map(|(m, w)| (m - mean).powi(2) * w).sum();
    let within: f64 = variances.iter().zip(weights).map(|(v, w)| v * w).sum();
    Ok(BmaMoments { mean, between, within, total: between + within })
}

/// Mean over replicates of `level - truth`, per site.
pub fn bias_estimate(truth: &[f64], replicate_levels: &[Vec<f64>]) -> Result<Vec<f64>> {
    if replicate_levels.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if replicate_levels.iter().any(|r| r.len() != truth.len()) {
        return Err(Error::DimensionMismatch("replicate levels and truth differ in site count".into()));
    }
    let n = replicate_levels.len() as f64;
    Ok((0..truth.len())
        .map(|s| replicate_levels.iter().map(|r| r[s] - truth[s]).sum::<f64>() / n)
        .collect())
}

/// Percentage variance reduction of the second method over the first.
pub fn relative_improvement(var_gev: f64, var_msp: f64) -> Result<f64> {
    if !(var_gev > 0.0) || !(var_msp >= 0.0) {
        return Err(Error::Domain(format!("variances must be positive, got ({var_gev}, {var_msp})")));
    }
    Ok((var_gev - var_msp) / var_gev * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize_coords, Site};
    use crate::gev::{gev_sample, GevParams};

    fn ensemble(rows: Vec<Option<Vec<f64>>>) -> BootstrapEnsemble {
        BootstrapEnsemble { b: rows.len(), seed: 0, period: 20.0, intensities: rows, failures: vec![] }
    }

    #[test]
    fn likelihood_examples() {
        let r = ensemble(vec![Some(vec![10.0]), Some(vec![14.0])]);
        let m = ensemble(vec![Some(vec![11.0]), Some(vec![15.0])]);
        let l = model_likelihood(&r, &m, 0).unwrap().exp();
        assert!((l - (-1.0f64 / 8.0).exp() / ((2.0 * std::f64::consts::PI).sqrt() * 2.0)).abs() < 1e-15);
        assert!((l - 0.17600).abs() < 1e-4);
        // identical series with unit variance
        let x = [-1.0, 1.0];
        assert!((log_likelihood_from_series(&x, &x).unwrap().exp() - 0.398_942_280_401_432_7).abs() < 1e-15);
        // msd = 2 sigma^2
        let y = [-1.0 + 2f64.sqrt(), 1.0 + 2f64.sqrt()];
        assert!((log_likelihood_from_series(&x, &y).unwrap() - (-1.0 - 0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-14);
        assert!(matches!(log_likelihood_from_series(&[3.0, 3.0], &[1.0, 2.0]), Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn failed_replicates_dropped_pairwise() {
        let mut rows: Vec<Option<Vec<f64>>> = (0..10).map(|i| Some(vec![i as f64])).collect();
        let model = ensemble(rows.clone());
        rows[3] = None;
        let r = ensemble(rows);
        let expected = log_likelihood_from_series(
            &[0.0, 1.0, 2.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
            &[0.0, 1.0, 2.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        assert_eq!(model_likelihood(&r, &model, 0).unwrap(), expected);
        let sparse = ensemble((0..10).map(|i| (i < 7).then(|| vec![i as f64])).collect());
        assert!(matches!(model_likelihood(&sparse, &model, 0), Err(Error::UnstableBootstrap { effective: 7, .. })));
    }

    #[test]
    fn weights_examples() {
        let w = posterior_weights(&[0.3; 17], &[1.0 / 17.0; 17]).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 17.0).abs() < 1e-15));
        let l = [0.2f64.ln(), 0.2f64.ln(), 0.6f64.ln()];
        let w = posterior_weights(&l, &[1.0 / 3.0; 3]).unwrap();
        for (a, b) in w.iter().zip([0.2, 0.2, 0.6]) {
            assert!((a - b).abs() < 1e-14);
        }
        let shifted: Vec<f64> = l.iter().map(|x| x + 700.0).collect();
        for (a, b) in posterior_weights(&shifted, &[1.0 / 3.0; 3]).unwrap().iter().zip(&w) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(posterior_weights(&[f64::NEG_INFINITY; 2], &[0.5, 0.5]), Err(Error::NoInformation)));
        assert!(posterior_weights(&[0.0, 0.0], &[0.7, 0.7]).is_err());
    }

    #[test]
    fn weights_permute_with_models() {
        let l = [-3.0, -1.5, -7.25, -2.0];
        let priors = [0.1, 0.2, 0.3, 0.4];
        let w = posterior_weights(&l, &priors).unwrap();
        let order = [2, 0, 3, 1];
        let wp = posterior_weights(&order.map(|i| l[i]), &order.map(|i| priors[i])).unwrap();
        for (k, &i) in order.iter().enumerate() {
            assert!((wp[k] - w[i]).abs() < 1e-15);
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn combine_examples() {
        let m = bma_combine(&[10.0, 14.0], &[4.0, 4.0], &[0.5, 0.5]).unwrap();
        assert_eq!(m, BmaMoments { mean: 12.0, between: 4.0, within: 4.0, total: 8.0 });
        let m = bma_combine(&[7.0], &[2.5], &[1.0]).unwrap();
        assert_eq!((m.mean, m.between, m.total), (7.0, 0.0, 2.5));
        let m = bma_combine(&[3.0; 4], &[1.0, 2.0, 3.0, 4.0], &[0.25; 4]).unwrap();
        assert_eq!(m.between, 0.0);
        assert!(bma_combine(&[1.0], &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn bias_and_improvement() {
        let truth = [10.0, 20.0];
        assert_eq!(bias_estimate(&truth, &[truth.to_vec(), truth.to_vec()]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(bias_estimate(&truth, &[vec![12.5, 22.5], vec![12.5, 22.5]]).unwrap(), vec![2.5, 2.5]);
        assert!((relative_improvement(353.6, 148.7).unwrap() - 57.9).abs() < 0.05);
        assert!((relative_improvement(21.6, 55.0).unwrap() + 154.6).abs() < 0.05);
        assert_eq!(relative_improvement(5.0, 5.0).unwrap(), 0.0);
        assert!(relative_improvement(0.0, 1.0).is_err());
    }

    fn gumbel_data(n_years: usize) -> Dataset {
        let sites = normalize_coords(&(0..10).map(|i| Site::new(format!("s{i}"), i as f64, (i * 3 % 7) as f64, 0.0)).collect::<Vec<_>>())
            .unwrap()
            .0;
        let p = GevParams::gumbel(100.0, 30.0).unwrap();
        let cols: Vec<Vec<f64>> = (0..10).map(|s| gev_sample(&p, n_years, s as u64).unwrap()).collect();
        let rows = (0..n_years).map(|y| cols.iter().map(|c| c[y]).collect()).collect();
        Dataset::new("g", sites, (0..n_years as i32).collect(), rows).unwrap()
    }

    #[test]
    fn bootstrap_shapes() {
        let data = gumbel_data(30);
        let reps = yearwise_bootstrap(&data, 5, 3).unwrap();
        assert!(reps.iter().all(|r| r.n_years() == 30 && r.n_sites() == 10));
        assert_eq!(reps, yearwise_bootstrap(&data, 5, 3).unwrap());
        let one = gumbel_data(1);
        assert!(yearwise_bootstrap(&one, 4, 1).unwrap().iter().all(|r| *r == one));
        assert!(matches!(yearwise_bootstrap(&data, 0, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn gev_intensities() {
        let data = gumbel_data(30);
        let idx = bootstrap_indices(30, 200, 4).unwrap();
        let ens = &intensity_series(&data, &idx, 4, &[20.0], &Estimator::Gev).unwrap()[0];
        assert_eq!(ens.effective_b(), 200);
        let mean: f64 = (0..10).map(|s| ens.moments(s).0).sum::<f64>() / 10.0;
        let truth = return_level(20.0, &GevParams::gumbel(100.0, 30.0).unwrap()).unwrap();
        assert!((truth - 189.1).abs() < 0.05);
        assert!((mean / truth - 1.0).abs() < 0.1, "{mean} vs {truth}");
        // weighted levels equal levels on the materialized resample
        let direct = Estimator::Gev.levels(&data.select_years(&idx[7]), None, &[20.0], 0).unwrap();
        assert_eq!(ens.intensities[7].as_ref().unwrap(), &direct[0]);
    }

    #[test]
    fn identical_replicates_have_zero_variance() {
        let data = gumbel_data(30);
        let idx = vec![(0..30).collect::<Vec<usize>>(); 10];
        let ens = &intensity_series(&data, &idx, 1, &[20.0], &Estimator::Gev).unwrap()[0];
        assert!((0..10).all(|s| ens.moments(s).1 < 1e-20 * ens.moments(s).0.powi(2)));
    }

    #[test]
    fn constant_data_fails_with_counts() {
        let data = gumbel_data(30).map_values(|_, _| Ok(50.0)).unwrap();
        let idx = bootstrap_indices(30, 20, 1).unwrap();
        match intensity_series(&data, &idx, 1, &[20.0], &Estimator::Gev) {
            Err(Error::UnstableBootstrap { effective: 0, requested: 20, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
