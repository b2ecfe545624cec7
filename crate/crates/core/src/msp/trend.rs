//! Polynomial trend surfaces for the GEV location and scale over
//! normalized coordinates, with a spatially constant shape.

use serde::{Deserialize, Serialize};

use crate::data::Site;
use crate::error::{Error, Result};
use crate::gev::GevParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisTerm {
    Intercept,
    Lat,
    Lon,
    Lat2,
    LatLon,
    Lon2,
    Alt,
}

impl BasisTerm {
    pub fn eval(&self, site: &Site) -> f64 {
        let (t, g) = (site.norm_lat, site.norm_lon);
        match self {
            BasisTerm::Intercept => 1.0,
            BasisTerm::Lat => t,
            BasisTerm::Lon => g,
            BasisTerm::Lat2 => t * t,
            BasisTerm::LatLon => t * g,
            BasisTerm::Lon2 => g * g,
            BasisTerm::Alt => site.norm_alt,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BasisTerm::Intercept => "1",
            BasisTerm::Lat => "lat",
            BasisTerm::Lon => "lon",
            BasisTerm::Lat2 => "lat^2",
            BasisTerm::LatLon => "lat*lon",
            BasisTerm::Lon2 => "lon^2",
            BasisTerm::Alt => "alt",
        }
    }
}

/// Which basis terms enter the location and scale surfaces.
///
/// Both lists must start with [`BasisTerm::Intercept`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSet {
    pub name: String,
    pub mu: Vec<BasisTerm>,
    pub sigma: Vec<BasisTerm>,
}

impl TermSet {
    pub fn new(name: impl Into<String>, mu: Vec<BasisTerm>, sigma: Vec<BasisTerm>) -> Result<Self> {
        for (which, terms) in [("location", &mu), ("scale", &sigma)] {
            if terms.first() != Some(&BasisTerm::Intercept) {
                return Err(Error::InvalidSurface(format!("{which} terms must start with the intercept")));
            }
            let mut seen = std::collections::HashSet::new();
            if !terms.iter().all(|t| seen.insert(*t)) {
                return Err(Error::InvalidSurface(format!("{which} terms repeat a basis term")));
            }
        }
        Ok(TermSet { name: name.into(), mu, sigma })
    }

    /// Location quadratic without `lon^2`; scale on `1, lon, lat*lon`.
    pub fn default_surface() -> Self {
        use BasisTerm::*;
        TermSet {
            name: "default".into(),
            mu: vec![Intercept, Lat, Lon, Lat2, LatLon],
            sigma: vec![Intercept, Lon, LatLon],
        }
    }

    pub fn intercepts_only() -> Self {
        TermSet {
            name: "intercepts".into(),
            mu: vec![BasisTerm::Intercept],
            sigma: vec![BasisTerm::Intercept],
        }
    }

    pub fn full_quadratic() -> Self {
        use BasisTerm::*;
        let all = vec![Intercept, Lat, Lon, Lat2, LatLon, Lon2];
        TermSet { name: "full-quadratic".into(), mu: all.clone(), sigma: all }
    }

    /// The fixed search catalog, in tie-breaking order.
    pub fn catalog() -> Vec<TermSet> {
        vec![Self::default_surface(), Self::intercepts_only(), Self::full_quadratic()]
    }

    /// Trend coefficients plus the constant shape.
    pub fn n_trend_params(&self) -> usize {
        self.mu.len() + self.sigma.len() + 1
    }

    pub fn surface(&self, mu: &[f64], sigma: &[f64], xi: f64) -> Result<TrendSurface> {
        if mu.len() != self.mu.len() || sigma.len() != self.sigma.len() {
            return Err(Error::DimensionMismatch("coefficient count does not match the term set".into()));
        }
        Ok(TrendSurface {
            mu_terms: self.mu.iter().copied().zip(mu.iter().copied()).collect(),
            sigma_terms: self.sigma.iter().copied().zip(sigma.iter().copied()).collect(),
            xi,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSurface {
    pub mu_terms: Vec<(BasisTerm, f64)>,
    pub sigma_terms: Vec<(BasisTerm, f64)>,
    pub xi: f64,
}

impl TrendSurface {
    /// Spatially constant GEV parameters.
    pub fn constant(mu: f64, sigma: f64, xi: f64) -> Self {
        TrendSurface {
            mu_terms: vec![(BasisTerm::Intercept, mu)],
            sigma_terms: vec![(BasisTerm::Intercept, sigma)],
            xi,
        }
    }

    pub fn term_set(&self, name: &str) -> TermSet {
        TermSet {
            name: name.into(),
            mu: self.mu_terms.iter().map(|t| t.0).collect(),
            sigma: self.sigma_terms.iter().map(|t| t.0).collect(),
        }
    }

    pub fn mu_coefficients(&self) -> Vec<f64> {
        self.mu_terms.iter().map(|t| t.1).collect()
    }

    pub fn sigma_coefficients(&self) -> Vec<f64> {
        self.sigma_terms.iter().map(|t| t.1).collect()
    }

    pub fn coefficient(&self, location: bool, term: BasisTerm) -> f64 {
        let terms = if location { &self.mu_terms } else { &self.sigma_terms };
        terms.iter().find(|t| t.0 == term).map_or(0.0, |t| t.1)
    }

    /// Adds `delta` to the location intercept.
    pub fn shift_location(&mut self, delta: f64) {
        match self.mu_terms.iter_mut().find(|t| t.0 == BasisTerm::Intercept) {
            Some(t) => t.1 += delta,
            None => self.mu_terms.push((BasisTerm::Intercept, delta)),
        }
    }
}

pub fn evaluate_trend(site: &Site, trend: &TrendSurface) -> Result<GevParams> {
    if !site.is_normalized() {
        return Err(Error::InvalidSurface(format!("site '{}' has no normalized coordinates", site.id)));
    }
    let mu: f64 = trend.mu_terms.iter().map(|(t, c)| c * t.eval(site)).sum();
    let sigma: f64 = trend.sigma_terms.iter().map(|(t, c)| c * t.eval(site)).sum();
    if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() || !trend.xi.is_finite() {
        return Err(Error::InvalidSurface(format!(
            "site '{}': location {mu}, scale {sigma}, shape {}",
            site.id, trend.xi
        )));
    }
    Ok(GevParams { mu, sigma, xi: trend.xi })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(t: f64, g: f64) -> Site {
        Site { norm_lat: t, norm_lon: g, norm_alt: 0.0, ..Site::new("s", 0.0, 0.0, 0.0) }
    }

    #[test]
    fn constant_surface() {
        let trend = TrendSurface::constant(50.0, 20.0, 0.1);
        for (t, g) in [(0.0, 0.0), (0.3, 0.9), (1.0, 1.0)] {
            assert_eq!(evaluate_trend(&site(t, g), &trend).unwrap(), GevParams { mu: 50.0, sigma: 20.0, xi: 0.1 });
        }
    }

    #[test]
    fn default_terms_with_unit_coefficients() {
        let ts = TermSet::default_surface();
        let trend = ts.surface(&[1.0; 5], &[1.0; 3], 0.0).unwrap();
        let p = evaluate_trend(&site(1.0, 1.0), &trend).unwrap();
        assert_eq!((p.mu, p.sigma), (5.0, 3.0));
        let trend = ts.surface(&[7.0, 1.0, 2.0, 3.0, 4.0], &[2.5, 1.0, 1.0], 0.2).unwrap();
        let p = evaluate_trend(&site(0.0, 0.0), &trend).unwrap();
        assert_eq!((p.mu, p.sigma, p.xi), (7.0, 2.5, 0.2));
    }

    #[test]
    fn invalid_surfaces() {
        let trend = TermSet::default_surface().surface(&[1.0; 5], &[1.0, -3.0, 0.0], 0.0).unwrap();
        assert!(matches!(evaluate_trend(&site(0.5, 1.0), &trend), Err(Error::InvalidSurface(_))));
        assert!(evaluate_trend(&Site::new("raw", 1.0, 2.0, 3.0), &TrendSurface::constant(1.0, 1.0, 0.0)).is_err());
        assert!(TermSet::new("bad", vec![BasisTerm::Lat], vec![BasisTerm::Intercept]).is_err());
        assert!(TermSet::new("dup", vec![BasisTerm::Intercept, BasisTerm::Intercept], vec![BasisTerm::Intercept]).is_err());
        assert!(TermSet::default_surface().surface(&[1.0; 4], &[1.0; 3], 0.0).is_err());
    }

    #[test]
    fn catalog_order() {
        let names: Vec<_> = TermSet::catalog().into_iter().map(|t| t.name).collect();
        assert_eq!(names, ["default", "intercepts", "full-quadratic"]);
        assert_eq!(TermSet::default_surface().n_trend_params(), 9);
    }
}
