//! Max-stable process models for spatial annual maxima.
//!
//! A model couples GEV trend surfaces for the margins with a pairwise
//! dependence structure (extremal Gaussian or Brown–Resnick). Fitting uses
//! the pairwise composite likelihood; model choice uses the Takeuchi
//! information criterion.

pub mod dependence;
pub mod extremal;
pub mod likelihood;
pub mod params;
pub mod tic;
pub mod trend;

use serde::{Deserialize, Serialize};

use crate::data::Site;
use crate::error::{Error, Result};
use crate::gev::return_level;

pub use dependence::{
    br_v, br_variogram, extremal_coefficient_model, powered_exp_corr, schlather_v, DependenceKind,
    DependenceModel, PairDependence,
};
pub use extremal::{extremal_coefficient_empirical, EmpiricalExtremalCoefficient};
pub use likelihood::{frechet_transform, pairwise_bivariate_logdensity, pairwise_nll, PairwiseLikelihood};
pub use tic::{tic, TicReport};
pub use trend::{evaluate_trend, BasisTerm, TermSet, TrendSurface};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MspModel {
    pub trend: TrendSurface,
    pub dep: DependenceModel,
}

/// How inter-site distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// Euclidean distance on normalized (lat, lon).
    #[default]
    Normalized,
    /// Euclidean distance on raw (lat, lon) in degrees.
    Degrees,
}

impl std::str::FromStr for DistanceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(DistanceMode::Normalized),
            "degrees" => Ok(DistanceMode::Degrees),
            other => Err(Error::InvalidParameter(format!("unknown distance mode '{other}'"))),
        }
    }
}

pub fn site_distance(a: &Site, b: &Site, mode: DistanceMode) -> Result<f64> {
    let (dlat, dlon) = match mode {
        DistanceMode::Normalized => {
            if !(a.is_normalized() && b.is_normalized()) {
                return Err(Error::InvalidParameter("distance requires normalized site coordinates".into()));
            }
            (a.norm_lat - b.norm_lat, a.norm_lon - b.norm_lon)
        }
        DistanceMode::Degrees => (a.lat - b.lat, a.lon - b.lon),
    };
    Ok(dlat.hypot(dlon))
}

/// Return level at a site under the model's marginal trend surfaces.
pub fn msp_return_level(period: f64, site: &Site, model: &MspModel) -> Result<f64> {
    return_level(period, &evaluate_trend(site, &model.trend)?)
}
