//! Marginal standardization and the pairwise composite likelihood.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gev::GevParams;

use super::dependence::PairDependence;
use super::trend::evaluate_trend;
use super::{site_distance, DistanceMode, MspModel};

/// A value mapped to the unit-Fréchet scale together with `log dz/dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitFrechet {
    pub z: f64,
    pub log_z: f64,
    pub log_jacobian: f64,
}

/// `z = (1 + xi (x - mu) / sigma)^(1 / xi)`, the map under which
/// `G(x) = exp(-1 / z)`.
pub fn frechet_transform(x: f64, p: &GevParams) -> Result<UnitFrechet> {
    let s = (x - p.mu) / p.sigma;
    let (log_z, log_jacobian) = if p.is_gumbel() {
        (s, s - p.sigma.ln())
    } else {
        let t = p.xi * s;
        if !(t > -1.0) {
            return Err(Error::Domain(format!(
                "value {x} outside the support of GEV({}, {}, {})",
                p.mu, p.sigma, p.xi
            )));
        }
        let log_t = t.ln_1p();
        (log_t / p.xi, (1.0 / p.xi - 1.0) * log_t - p.sigma.ln())
    };
    let z = log_z.exp();
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("value {x} maps to non-finite unit-Fréchet level")));
    }
    Ok(UnitFrechet { z, log_z, log_jacobian })
}

/// Inverse of [`frechet_transform`].
pub fn from_unit_frechet(z: f64, p: &GevParams) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("unit-Fréchet level must be positive and finite, got {z}")));
    }
    let log_z = z.ln();
    Ok(if p.is_gumbel() {
        p.mu + p.sigma * log_z
    } else {
        p.mu + p.sigma * (p.xi * log_z).exp_m1() / p.xi
    })
}

/// Log density of one bivariate observation on the data scale:
/// `log(V1 V2 - V12) - V + log|J1| + log|J2|`.
pub fn pairwise_bivariate_logdensity(
    x1: f64,
    x2: f64,
    p1: &GevParams,
    p2: &GevParams,
    dep: &PairDependence,
) -> Result<f64> {
    let a = frechet_transform(x1, p1)?;
    let b = frechet_transform(x2, p2)?;
    Ok(dep.log_density_unit(a.z, b.z)? + a.log_jacobian + b.log_jacobian)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SitePair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

/// Pairwise likelihood over every site pair and year of a dataset.
///
/// Optional per-year weights count repeated years (a bootstrap replicate
/// can be expressed as the original rows with multiplicities).
#[derive(Debug, Clone)]
pub struct PairwiseLikelihood<'a> {
    data: &'a Dataset,
    pairs: Vec<SitePair>,
    year_weights: Option<Vec<f64>>,
}

impl<'a> PairwiseLikelihood<'a> {
    pub fn new(data: &'a Dataset, mode: DistanceMode) -> Result<Self> {
        let k = data.n_sites();
        if k < 2 {
            return Err(Error::InsufficientData { needed: 2, got: k });
        }
        if data.n_years() < 1 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let sites = data.sites();
        let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in i + 1..k {
                pairs.push(SitePair { i, j, distance: site_distance(&sites[i], &sites[j], mode)? });
            }
        }
        Ok(PairwiseLikelihood { data, pairs, year_weights: None })
    }

    pub fn with_year_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.data.n_years() {
            return Err(Error::DimensionMismatch(format!(
                "{} year weights for {} years",
                weights.len(),
                self.data.n_years()
            )));
        }
        self.year_weights = Some(weights);
        Ok(self)
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn pairs(&self) -> &[SitePair] {
        &self.pairs
    }

    /// Weighted number of years.
    pub fn effective_years(&self) -> f64 {
        self.year_weights.as_ref().map_or(self.data.n_years() as f64, |w| w.iter().sum())
    }

    pub fn year_weights(&self) -> Option<&[f64]> {
        self.year_weights.as_deref()
    }

    /// Pairwise log likelihood contribution of each year (unweighted).
    pub fn per_year_loglik(&self, model: &MspModel) -> Result<Vec<f64>> {
        let data = self.data;
        let k = data.n_sites();
        let margins = data
            .sites()
            .iter()
            .map(|s| evaluate_trend(s, &model.trend))
            .collect::<Result<Vec<_>>>()?;
        model.dep.validate()?;
        let deps = self
            .pairs
            .iter()
            .map(|p| model.dep.at_distance(p.distance))
            .collect::<Result<Vec<_>>>()?;

        let mut unit = Vec::with_capacity(k);
        let mut out = Vec::with_capacity(data.n_years());
        for (y, row) in data.rows().enumerate() {
            if self.year_weights.as_ref().is_some_and(|w| w[y] == 0.0) {
                out.push(0.0);
                continue;
            }
            unit.clear();
            for (s, (&x, p)) in row.iter().zip(&margins).enumerate() {
                let u = frechet_transform(x, p).map_err(|e| Error::PairTerm {
                    year: y,
                    site_a: s,
                    site_b: s,
                    source: Box::new(e),
                })?;
                unit.push(u);
            }
            let mut total = 0.0;
            for (pair, dep) in self.pairs.iter().zip(&deps) {
                let (a, b) = (&unit[pair.i], &unit[pair.j]);
                let lf = dep.log_density_with_logs(a.z, a.log_z, b.z, b.log_z).map_err(|e| Error::PairTerm {
                    year: y,
                    site_a: pair.i,
                    site_b: pair.j,
                    source: Box::new(e),
                })?;
                total += lf + a.log_jacobian + b.log_jacobian;
            }
            out.push(total);
        }
        Ok(out)
    }

    /// Negative pairwise log likelihood, weighted by year multiplicities.
    pub fn nll(&self, model: &MspModel) -> Result<f64> {
        let ll = self.per_year_loglik(model)?;
        let total = match &self.year_weights {
            Some(w) => ll.iter().zip(w).map(|(l, w)| l * w).sum::<f64>(),
            None => ll.iter().sum(),
        };
        Ok(-total)
    }
}

/// Negative pairwise log likelihood on normalized-coordinate distances.
pub fn pairwise_nll(data: &Dataset, model: &MspModel) -> Result<f64> {
    PairwiseLikelihood::new(data, DistanceMode::Normalized)?.nll(model)
}
