//! Synthetic reanalysis plus a perturbed multi-model ensemble.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{normalize_coords, Dataset, Site};
use crate::error::{Error, Result};
use crate::msp::{evaluate_trend, DependenceKind, DependenceModel, MspModel, TermSet};
use crate::rng::{derive_seed, rng_from};

use super::field::simulate_msp;

/// Ten grid-box centres spanning 34.23–38.15 N, 126.22–129.24 E.
pub fn default_sites() -> Vec<Site> {
    let raw = [
        ("S01", 34.23, 126.22, 12.0),
        ("S02", 34.70, 127.60, 35.4),
        ("S03", 35.10, 128.95, 8.2),
        ("S04", 35.60, 126.70, 1.3),
        ("S05", 35.90, 128.10, 121.7),
        ("S06", 36.50, 127.20, 68.9),
        ("S07", 36.60, 129.24, 44.0),
        ("S08", 37.30, 126.60, 19.5),
        ("S09", 37.60, 128.20, 263.1),
        ("S10", 38.15, 127.40, 150.2),
    ];
    let sites: Vec<Site> = raw.iter().map(|&(id, lat, lon, alt)| Site::new(id, lat, lon, alt)).collect();
    normalize_coords(&sites).expect("fixed site grid has extent").0
}

/// Location quadratic and linear scale surface on normalized coordinates,
/// Brown–Resnick dependence.
pub fn default_truth() -> MspModel {
    let trend = TermSet::default_surface()
        .surface(&[110.0, 15.0, -12.0, -10.0, 8.0], &[32.0, 6.0, -5.0], 0.1)
        .expect("coefficient counts match");
    MspModel { trend, dep: DependenceModel { kind: DependenceKind::BrownResnick, tau: 0.5, eta: 1.0 } }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_models: usize,
    pub years: usize,
    pub historical_start: i32,
    pub future_start: i32,
    pub truth: MspModel,
    /// Coefficient noise, relative to the truth's location/scale intercepts.
    pub trend_perturbation: f64,
    /// Noise on `ln tau` and on the logit of `eta / 2`.
    pub dependence_perturbation: f64,
    /// Future location shift, relative to the location intercept.
    pub future_shift: f64,
    /// Fixed per-site location offsets (relative to the location intercept)
    /// shared by every dataset; nonzero values put the truth outside any
    /// polynomial trend family.
    pub site_noise: f64,
    /// Optional per-model multipliers on both perturbation sizes.
    pub model_scales: Vec<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_models: 17,
            years: 30,
            historical_start: 1971,
            future_start: 2021,
            truth: default_truth(),
            trend_perturbation: 0.08,
            dependence_perturbation: 0.3,
            future_shift: 0.1,
            site_noise: 0.0,
            model_scales: Vec::new(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_models < 1 {
            return Err(Error::InvalidParameter("ensemble needs at least one model".into()));
        }
        if self.years < 1 {
            return Err(Error::InvalidParameter("ensemble needs at least one year".into()));
        }
        let nonneg = [self.trend_perturbation, self.dependence_perturbation, self.site_noise];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !self.future_shift.is_finite() {
            return Err(Error::InvalidParameter("perturbation sizes must be finite and nonnegative".into()));
        }
        if !self.model_scales.is_empty() && self.model_scales.len() != self.n_models {
            return Err(Error::DimensionMismatch(format!(
                "{} model scales for {} models",
                self.model_scales.len(),
                self.n_models
            )));
        }
        if self.model_scales.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("model scales must be finite and nonnegative".into()));
        }
        self.truth.dep.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEnsemble {
    pub reanalysis: Dataset,
    pub historical: Vec<Dataset>,
    pub future: Vec<Dataset>,
    pub truth: MspModel,
    /// Historical-period parameters of each model.
    pub models: Vec<MspModel>,
    pub site_offsets: Vec<f64>,
}

fn perturb(truth: &MspModel, sites: &[Site], cfg: &EnsembleConfig, scale: f64, seed: u64) -> Result<MspModel> {
    let mut rng = rng_from(seed, &[]);
    let mu0 = truth.trend.mu_terms[0].1.abs();
    let sigma0 = truth.trend.sigma_terms[0].1.abs();
    let tp = cfg.trend_perturbation * scale;
    let dp = cfg.dependence_perturbation * scale;
    for _ in 0..100 {
        let mut m = truth.clone();
        for t in &mut m.trend.mu_terms {
            t.1 += tp * mu0 * rng.sample::<f64, _>(StandardNormal);
        }
        for t in &mut m.trend.sigma_terms {
            t.1 += tp * sigma0 * rng.sample::<f64, _>(StandardNormal);
        }
        m.trend.xi += tp * 0.5 * rng.sample::<f64, _>(StandardNormal);
        m.dep.tau *= (dp * rng.sample::<f64, _>(StandardNormal)).exp();
        let half = (m.dep.eta / 2.0).min(1.0 - 1e-9);
        let logit = (half / (1.0 - half)).ln() + dp * rng.sample::<f64, _>(StandardNormal);
        m.dep.eta = 2.0 / (1.0 + (-logit).exp());
        if m.dep.validate().is_ok() && sites.iter().all(|s| evaluate_trend(s, &m.trend).is_ok()) {
            return Ok(m);
        }
    }
    Err(Error::InvalidParameter("perturbation too large: no valid model drawn in 100 attempts".into()))
}

fn offset_dataset(data: Dataset, offsets: &[f64], label: String) -> Result<Dataset> {
    Ok(data.map_values(|s, x| Ok(x + offsets[s]))?.with_label(label))
}

/// Simulates the reanalysis from `cfg.truth` and `K` models with perturbed
/// parameters; each model's future uses its own trend with a shifted
/// location.
pub fn synthetic_ensemble(sites: &[Site], cfg: &EnsembleConfig, seed: u64) -> Result<SyntheticEnsemble> {
    cfg.validate()?;
    let hist_years: Vec<i32> = (0..cfg.years as i32).map(|y| cfg.historical_start + y).collect();
    let fut_years: Vec<i32> = (0..cfg.years as i32).map(|y| cfg.future_start + y).collect();
    let mu0 = cfg.truth.trend.mu_terms[0].1.abs();
    let mut offset_rng = rng_from(seed, &[4]);
    let site_offsets: Vec<f64> = sites
        .iter()
        .map(|_| cfg.site_noise * mu0 * offset_rng.sample::<f64, _>(StandardNormal))
        .collect();

    let reanalysis = offset_dataset(
        simulate_msp(sites, &cfg.truth, &hist_years, derive_seed(seed, &[0]))?,
        &site_offsets,
        "reanalysis".into(),
    )?;
    let mut historical = Vec::with_capacity(cfg.n_models);
    let mut future = Vec::with_capacity(cfg.n_models);
    let mut models = Vec::with_capacity(cfg.n_models);
    for k in 0..cfg.n_models {
        let kk = k as u64;
        let scale = cfg.model_scales.get(k).copied().unwrap_or(1.0);
        let model = perturb(&cfg.truth, sites, cfg, scale, derive_seed(seed, &[1, kk]))?;
        let hist = simulate_msp(sites, &model, &hist_years, derive_seed(seed, &[2, kk]))?;
        historical.push(offset_dataset(hist, &site_offsets, format!("model-{:02}-historical", k + 1))?);
        let mut fut_model = model.clone();
        fut_model.trend.shift_location(cfg.future_shift * mu0);
        let fut = simulate_msp(sites, &fut_model, &fut_years, derive_seed(seed, &[3, kk]))?;
        future.push(offset_dataset(fut, &site_offsets, format!("model-{:02}-future", k + 1))?);
        models.push(model);
    }
    Ok(SyntheticEnsemble { reanalysis, historical, future, truth: cfg.truth.clone(), models, site_offsets })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_labels() {
        let cfg = EnsembleConfig { n_models: 3, ..Default::default() };
        let e = synthetic_ensemble(&default_sites(), &cfg, 1).unwrap();
        for d in std::iter::once(&e.reanalysis).chain(&e.historical).chain(&e.future) {
            assert_eq!((d.n_years(), d.n_sites()), (30, 10));
            assert!(d.validate_nonnegative().is_ok());
        }
        assert_eq!(e.historical.len(), 3);
        assert_eq!(e.future[0].years()[0], 2021);
    }

    #[test]
    fn zero_perturbation_reproduces_truth() {
        let cfg = EnsembleConfig { n_models: 2, trend_perturbation: 0.0, dependence_perturbation: 0.0, ..Default::default() };
        let e = synthetic_ensemble(&default_sites(), &cfg, 2).unwrap();
        assert!(e.models.iter().all(|m| *m == e.truth));
        assert_ne!(e.historical[0].rows().next(), e.historical[1].rows().next());
    }

    #[test]
    fn deterministic() {
        let cfg = EnsembleConfig { n_models: 2, site_noise: 0.05, ..Default::default() };
        let a = synthetic_ensemble(&default_sites(), &cfg, 3).unwrap();
        let b = synthetic_ensemble(&default_sites(), &cfg, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs() {
        let sites = default_sites();
        assert!(synthetic_ensemble(&sites, &EnsembleConfig { n_models: 0, ..Default::default() }, 1).is_err());
        assert!(synthetic_ensemble(&sites, &EnsembleConfig { model_scales: vec![1.0], ..Default::default() }, 1).is_err());
        assert!(synthetic_ensemble(&sites, &EnsembleConfig { site_noise: -1.0, ..Default::default() }, 1).is_err());
    }
}
