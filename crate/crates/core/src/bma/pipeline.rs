//! End-to-end averaging over an ensemble of model runs.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::msp::params::ParamLayout;
use crate::msp::{DependenceKind, DistanceMode, MspModel, PairwiseLikelihood, TermSet};
use crate::optimize::{fit_msp, fit_term_set, numerical_hessian, OptimizerConfig, StepRule};
use crate::rng::derive_seed;

use super::{
    bias_estimate, bma_combine, bootstrap_indices, intensity_series, model_likelihood, posterior_weights,
    relative_improvement, BmaMoments, BootstrapEnsemble, Estimator, Pipeline,
};

/// Variance attached to each model's future prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FutureVariance {
    /// Bootstrap variance of the future run.
    Bootstrap,
    /// Point estimates only; the within-model variance is zero.
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermSetMode {
    /// Always the default trend surface.
    Fixed,
    /// Per data source, the catalog entry with the lowest TIC.
    Catalog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MspSettings {
    pub kind: DependenceKind,
    pub term_mode: TermSetMode,
    /// Used for the fit on each original dataset.
    pub optimizer: OptimizerConfig,
    /// Used for replicate fits, which start from the original fit.
    pub replicate_optimizer: OptimizerConfig,
}

impl Default for MspSettings {
    fn default() -> Self {
        MspSettings {
            kind: DependenceKind::BrownResnick,
            term_mode: TermSetMode::Fixed,
            optimizer: OptimizerConfig::default(),
            replicate_optimizer: OptimizerConfig {
                restarts: 0,
                f_tol: 1e-3,
                x_tol: 1e-3,
                initial_step: 0.05,
                ..OptimizerConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BmaConfig {
    pub periods: Vec<f64>,
    /// Bootstrap replicates per data source.
    pub b: usize,
    pub seed: u64,
    /// Prior model probabilities; uniform when absent.
    pub priors: Option<Vec<f64>>,
    pub future_variance: FutureVariance,
    pub msp: MspSettings,
}

impl Default for BmaConfig {
    fn default() -> Self {
        BmaConfig {
            periods: vec![20.0],
            b: 500,
            seed: 0,
            priors: None,
            future_variance: FutureVariance::Bootstrap,
            msp: MspSettings::default(),
        }
    }
}

impl BmaConfig {
    pub fn validate(&self, n_models: usize) -> Result<()> {
        if self.periods.is_empty() || self.periods.iter().any(|t| !(*t > 1.0 && t.is_finite())) {
            return Err(Error::Domain("return periods must be finite and greater than 1".into()));
        }
        if self.b < 1 {
            return Err(Error::Domain("bootstrap size must be at least 1".into()));
        }
        if let Some(p) = &self.priors {
            if p.len() != n_models {
                return Err(Error::DimensionMismatch(format!("{} priors for {n_models} models", p.len())));
            }
            if p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter("priors must be nonnegative and sum to 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub label: String,
    pub weight: f64,
    pub log_likelihood: f64,
    pub historical_point: f64,
    pub historical_variance: f64,
    pub future_point: f64,
    pub future_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteEntry {
    pub site: String,
    pub models: Vec<ModelEntry>,
    pub historical: BmaMoments,
    pub future: BmaMoments,
    /// GEV-based average of the historical point estimates.
    pub truth: f64,
    /// Mean replicate average minus `truth`.
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodEntry {
    pub period: f64,
    pub sites: Vec<SiteEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub label: String,
    pub term_set: Option<String>,
    pub effective_b: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedModel {
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub pipeline: Pipeline,
    pub b: usize,
    pub seed: u64,
    pub future_variance: FutureVariance,
    pub sources: Vec<SourceInfo>,
    pub dropped: Vec<DroppedModel>,
    pub periods: Vec<PeriodEntry>,
}

struct SourceResult {
    info: SourceInfo,
    /// `[period][site]`
    point: Vec<Vec<f64>>,
    ensembles: Option<Vec<BootstrapEnsemble>>,
}

fn original_estimator(data: &Dataset, pipeline: Pipeline, cfg: &BmaConfig) -> Result<(Estimator, Option<String>)> {
    match pipeline {
        Pipeline::Gev => Ok((Estimator::Gev, None)),
        Pipeline::Msp => {
            let s = &cfg.msp;
            let (model, terms): (MspModel, TermSet) = match s.term_mode {
                TermSetMode::Fixed => {
                    let terms = TermSet::default_surface();
                    (fit_term_set(data, s.kind, &terms, &s.optimizer)?.0, terms)
                }
                TermSetMode::Catalog => {
                    let catalog = TermSet::catalog();
                    let report = fit_msp(data, s.kind, &catalog, &s.optimizer)?;
                    let terms = catalog.into_iter().find(|t| t.name == report.term_set).expect("selected set is in the catalog");
                    (report.model, terms)
                }
            };
            let name = terms.name.clone();
            let layout = ParamLayout::for_data(terms.clone(), s.kind, data)?;
            let lik = PairwiseLikelihood::new(data, DistanceMode::Normalized)?;
            let hessian = numerical_hessian(
                |v: &[f64]| layout.to_model(v).and_then(|m| lik.nll(&m)).unwrap_or(f64::NAN),
                &layout.to_vector(&model)?,
                StepRule::default(),
            )
            .ok()
            .map(|h| h.matrix);
            Ok((Estimator::Msp { start: model, terms, optimizer: s.replicate_optimizer, hessian }, Some(name)))
        }
    }
}

fn process_source(data: &Dataset, pipeline: Pipeline, cfg: &BmaConfig, seed: u64, bootstrap: bool) -> Result<SourceResult> {
    let (estimator, term_set) = original_estimator(data, pipeline, cfg)?;
    let point = match &estimator {
        Estimator::Gev => estimator.levels(data, None, &cfg.periods, seed)?,
        Estimator::Msp { start, .. } => cfg
            .periods
            .iter()
            .map(|&t| data.sites().iter().map(|s| crate::msp::msp_return_level(t, s, start)).collect())
            .collect::<Result<_>>()?,
    };
    let ensembles = if bootstrap {
        let idx = bootstrap_indices(data.n_years(), cfg.b, seed)?;
        Some(intensity_series(data, &idx, seed, &cfg.periods, &estimator)?)
    } else {
        None
    };
    let info = SourceInfo {
        label: data.label().to_string(),
        term_set,
        effective_b: ensembles.as_ref().map(|e| e[0].effective_b()),
    };
    Ok(SourceResult { info, point, ensembles })
}

struct ModelRun {
    label: String,
    historical: SourceResult,
    future: SourceResult,
    /// `[period][site]`
    log_likelihood: Vec<Vec<f64>>,
}

fn check_inputs(reanalysis: &Dataset, historical: &[Dataset], future: &[Dataset]) -> Result<()> {
    if historical.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if historical.len() != future.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} historical runs but {} future runs",
            historical.len(),
            future.len()
        )));
    }
    for d in historical.iter().chain(future) {
        if !reanalysis.same_sites(d) {
            return Err(Error::Schema(format!("{} does not share the reanalysis sites", d.label())));
        }
    }
    if historical.iter().any(|h| h.n_years() != reanalysis.n_years()) {
        return Err(Error::DimensionMismatch("historical runs and reanalysis differ in year count".into()));
    }
    Ok(())
}

/// Runs one averaging pipeline. Models whose fits or bootstraps fail are
/// dropped and reported; at least two must survive (one if only one was
/// given).
pub fn run_pipeline(
    reanalysis: &Dataset,
    historical: &[Dataset],
    future: &[Dataset],
    cfg: &BmaConfig,
    pipeline: Pipeline,
) -> Result<PipelineReport> {
    check_inputs(reanalysis, historical, future)?;
    cfg.validate(historical.len())?;
    let n_sites = reanalysis.n_sites();

    let reference = process_source(reanalysis, pipeline, cfg, derive_seed(cfg.seed, &[0]), true)?;
    let ref_ens = reference.ensembles.as_ref().expect("reanalysis is bootstrapped");

    let mut runs = Vec::new();
    let mut dropped = Vec::new();
    let mut survivor_priors = Vec::new();
    for (k, (hist, fut)) in historical.iter().zip(future).enumerate() {
        let attempt = || -> Result<ModelRun> {
            let h = process_source(hist, pipeline, cfg, derive_seed(cfg.seed, &[1, k as u64]), true)?;
            let f = process_source(
                fut,
                pipeline,
                cfg,
                derive_seed(cfg.seed, &[2, k as u64]),
                cfg.future_variance == FutureVariance::Bootstrap,
            )?;
            let h_ens = h.ensembles.as_ref().expect("historical runs are bootstrapped");
            let log_likelihood = ref_ens
                .iter()
                .zip(h_ens)
                .map(|(r, m)| (0..n_sites).map(|s| model_likelihood(r, m, s)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelRun { label: hist.label().to_string(), historical: h, future: f, log_likelihood })
        };
        match attempt() {
            Ok(run) => {
                runs.push(run);
                survivor_priors.push(cfg.priors.as_ref().map_or(1.0, |p| p[k]));
            }
            // a flat reanalysis makes every model fail the same way
            Err(e @ Error::DegenerateVariance(_)) => return Err(e),
            Err(e) => dropped.push(DroppedModel { label: hist.label().to_string(), reason: e.to_string() }),
        }
    }
    let needed = if historical.len() == 1 { 1 } else { 2 };
    if runs.len() < needed {
        return Err(Error::FitFailure(format!(
            "only {} of {} models survived: {}",
            runs.len(),
            historical.len(),
            dropped.iter().map(|d| format!("{}: {}", d.label, d.reason)).collect::<Vec<_>>().join("; ")
        )));
    }
    let prior_total: f64 = survivor_priors.iter().sum();
    if !(prior_total > 0.0) {
        return Err(Error::InvalidParameter("surviving models all have zero prior".into()));
    }
    let priors: Vec<f64> = survivor_priors.iter().map(|p| p / prior_total).collect();

    let truth_weights_and_points = match pipeline {
        Pipeline::Gev => None,
        Pipeline::Msp => {
            let gev_cfg = BmaConfig { future_variance: FutureVariance::Point, ..cfg.clone() };
            Some(run_pipeline(reanalysis, historical, future, &gev_cfg, Pipeline::Gev)?)
        }
    };

    let mut periods = Vec::with_capacity(cfg.periods.len());
    for (p, &period) in cfg.periods.iter().enumerate() {
        let mut sites = Vec::with_capacity(n_sites);
        let mut truths = Vec::with_capacity(n_sites);
        let mut weights_by_site = Vec::with_capacity(n_sites);
        for s in 0..n_sites {
            let ll: Vec<f64> = runs.iter().map(|r| r.log_likelihood[p][s]).collect();
            let w = posterior_weights(&ll, &priors)?;
            let hist_var: Vec<f64> = runs.iter().map(|r| r.historical.ensembles.as_ref().unwrap()[p].moments(s).1).collect();
            let hist_point: Vec<f64> = runs.iter().map(|r| r.historical.point[p][s]).collect();
            let fut_point: Vec<f64> = runs.iter().map(|r| r.future.point[p][s]).collect();
            let fut_var: Vec<f64> = runs
                .iter()
                .map(|r| r.future.ensembles.as_ref().map_or(0.0, |e| e[p].moments(s).1))
                .collect();
            let historical_bma = bma_combine(&hist_point, &hist_var, &w)?;
            let future_bma = bma_combine(&fut_point, &fut_var, &w)?;
            let truth = match &truth_weights_and_points {
                None => historical_bma.mean,
                Some(gev) => gev.periods[p].sites[s].truth,
            };
            truths.push(truth);
            let models = runs
                .iter()
                .enumerate()
                .map(|(k, r)| ModelEntry {
                    label: r.label.clone(),
                    weight: w[k],
                    log_likelihood: ll[k],
                    historical_point: hist_point[k],
                    historical_variance: hist_var[k],
                    future_point: fut_point[k],
                    future_variance: fut_var[k],
                })
                .collect();
            weights_by_site.push(w);
            sites.push(SiteEntry {
                site: reanalysis.sites()[s].id.clone(),
                models,
                historical: historical_bma,
                future: future_bma,
                truth,
                bias: f64::NAN,
            });
        }
        // replicate averages over replicates where every surviving model succeeded
        let replicate_levels: Vec<Vec<f64>> = (0..cfg.b)
            .filter_map(|i| {
                let rows: Option<Vec<&Vec<f64>>> =
                    runs.iter().map(|r| r.historical.ensembles.as_ref().unwrap()[p].intensities[i].as_ref()).collect();
                let rows = rows?;
                Some((0..n_sites).map(|s| rows.iter().zip(&weights_by_site[s]).map(|(row, w)| w * row[s]).sum()).collect())
            })
            .collect();
        let bias = bias_estimate(&truths, &replicate_levels)?;
        for (entry, b) in sites.iter_mut().zip(bias) {
            entry.bias = b;
        }
        periods.push(PeriodEntry { period, sites });
    }

    let mut sources = vec![reference.info];
    for r in &runs {
        sources.push(r.historical.info.clone());
        sources.push(r.future.info.clone());
    }
    Ok(PipelineReport { pipeline, b: cfg.b, seed: cfg.seed, future_variance: cfg.future_variance, sources, dropped, periods })
}

/// One site of the variance and bias comparison between the two pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub period: f64,
    pub site: String,
    pub variance_gev: f64,
    pub variance_msp: f64,
    /// `None` when the GEV variance is zero.
    pub relative_improvement: Option<f64>,
    pub bias_gev: f64,
    pub bias_msp: f64,
    pub future_variance_gev: f64,
    pub future_variance_msp: f64,
}

pub fn compare_pipelines(gev: &PipelineReport, msp: &PipelineReport) -> Result<Vec<ComparisonRow>> {
    if gev.periods.len() != msp.periods.len() {
        return Err(Error::DimensionMismatch("reports cover different return periods".into()));
    }
    let mut rows = Vec::new();
    for (pg, pm) in gev.periods.iter().zip(&msp.periods) {
        if pg.period != pm.period || pg.sites.len() != pm.sites.len() {
            return Err(Error::DimensionMismatch("reports cover different periods or sites".into()));
        }
        for (g, m) in pg.sites.iter().zip(&pm.sites) {
            rows.push(ComparisonRow {
                period: pg.period,
                site: g.site.clone(),
                variance_gev: g.historical.total,
                variance_msp: m.historical.total,
                relative_improvement: relative_improvement(g.historical.total, m.historical.total).ok(),
                bias_gev: g.bias,
                bias_msp: m.bias,
                future_variance_gev: g.future.total,
                future_variance_msp: m.future.total,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize_coords, Site};
    use crate::gev::{gev_sample, GevParams};

    fn gumbel_source(label: &str, mu: f64, seed: u64) -> Dataset {
        let sites = normalize_coords(
            &(0..6).map(|i| Site::new(format!("s{i}"), 34.0 + i as f64 * 0.7, 126.0 + (i * 3 % 5) as f64 * 0.6, 10.0 * i as f64)).collect::<Vec<_>>(),
        )
        .unwrap()
        .0;
        let p = GevParams::gumbel(mu, 30.0).unwrap();
        let cols: Vec<Vec<f64>> = (0..6).map(|s| gev_sample(&p, 30, derive_seed(seed, &[s])).unwrap()).collect();
        let rows = (0..30).map(|y| cols.iter().map(|c| c[y]).collect()).collect();
        Dataset::new(label, sites, (1971..2001).collect(), rows).unwrap()
    }

    fn gev_cfg() -> BmaConfig {
        BmaConfig { b: 200, seed: 11, ..Default::default() }
    }

    #[test]
    fn reanalysis_copy_dominates() {
        let re = gumbel_source("reanalysis", 100.0, 1);
        let corrupted = re.map_values(|_, v| Ok(2.0 * v)).unwrap().with_label("corrupted");
        let hist = vec![re.clone().with_label("copy"), corrupted];
        let fut = vec![gumbel_source("f0", 110.0, 4), gumbel_source("f1", 170.0, 5)];
        let report = run_pipeline(&re, &hist, &fut, &gev_cfg(), Pipeline::Gev).unwrap();
        for site in &report.periods[0].sites {
            assert!(site.models[0].weight > 0.9, "{:?}", site.models);
            let total: f64 = site.models.iter().map(|m| m.weight).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!((site.historical.total - site.historical.between - site.historical.within).abs() < 1e-9);
        }
        assert!(report.dropped.is_empty());
        assert_eq!(report.sources.len(), 5);
    }

    #[test]
    fn single_model_gets_full_weight_and_is_deterministic() {
        let re = gumbel_source("reanalysis", 100.0, 1);
        let hist = vec![gumbel_source("m", 120.0, 2)];
        let fut = vec![gumbel_source("mf", 130.0, 3)];
        let cfg = BmaConfig { future_variance: FutureVariance::Point, ..gev_cfg() };
        let a = run_pipeline(&re, &hist, &fut, &cfg, Pipeline::Gev).unwrap();
        let site = &a.periods[0].sites[0];
        assert_eq!(site.models[0].weight, 1.0);
        assert_eq!(site.future.within, 0.0);
        assert_eq!(site.historical.between, 0.0);
        assert_eq!(a, run_pipeline(&re, &hist, &fut, &cfg, Pipeline::Gev).unwrap());
    }

    #[test]
    fn failing_model_is_dropped() {
        let re = gumbel_source("reanalysis", 100.0, 1);
        let flat = gumbel_source("flat", 100.0, 9).map_values(|_, _| Ok(40.0)).unwrap();
        let hist = vec![gumbel_source("a", 100.0, 2), flat, gumbel_source("b", 120.0, 3)];
        let fut = vec![gumbel_source("fa", 100.0, 4), gumbel_source("fflat", 100.0, 5), gumbel_source("fb", 100.0, 6)];
        let report = run_pipeline(&re, &hist, &fut, &gev_cfg(), Pipeline::Gev).unwrap();
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].label, "flat");
        assert_eq!(report.periods[0].sites[0].models.len(), 2);
    }

    #[test]
    fn flat_reanalysis_is_fatal() {
        let re = gumbel_source("reanalysis", 100.0, 1).map_values(|_, _| Ok(5.0)).unwrap();
        let hist = vec![gumbel_source("a", 100.0, 2), gumbel_source("b", 100.0, 3)];
        let err = run_pipeline(&re, &hist, &hist, &gev_cfg(), Pipeline::Gev).unwrap_err();
        assert!(err.is_numeric());
    }

    #[test]
    fn gev_bias_is_small_when_models_match_truth() {
        let re = gumbel_source("reanalysis", 100.0, 1);
        let hist: Vec<Dataset> = (0..3).map(|k| gumbel_source(&format!("m{k}"), 100.0, 10 + k)).collect();
        let report = run_pipeline(&re, &hist, &hist, &gev_cfg(), Pipeline::Gev).unwrap();
        for s in &report.periods[0].sites {
            assert!(s.bias.abs() < 0.5 * s.historical.total.sqrt(), "{} vs sd {}", s.bias, s.historical.total.sqrt());
        }
    }

    #[test]
    fn config_validation() {
        let re = gumbel_source("reanalysis", 100.0, 1);
        let hist = vec![gumbel_source("a", 100.0, 2), gumbel_source("b", 100.0, 3)];
        let bad_priors = BmaConfig { priors: Some(vec![0.5]), ..gev_cfg() };
        assert!(run_pipeline(&re, &hist, &hist, &bad_priors, Pipeline::Gev).is_err());
        let bad_period = BmaConfig { periods: vec![1.0], ..gev_cfg() };
        assert!(run_pipeline(&re, &hist, &hist, &bad_period, Pipeline::Gev).is_err());
        assert!(run_pipeline(&re, &hist, &hist[..1], &gev_cfg(), Pipeline::Gev).is_err());
    }

    #[test]
    fn comparison_rows() {
        let re = gumbel_source("reanalysis", 100.0, 1);
        let hist = vec![gumbel_source("a", 100.0, 2), gumbel_source("b", 110.0, 3)];
        let g = run_pipeline(&re, &hist, &hist, &gev_cfg(), Pipeline::Gev).unwrap();
        let rows = compare_pipelines(&g, &g).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.relative_improvement == Some(0.0)));
    }
}
