//! Mapping between an [`MspModel`] and the unconstrained vector the
//! optimizer works on.
//!
//! Layout: location coefficients / scale, `ln(sigma_0 / scale)`, remaining
//! scale coefficients / scale, `xi`, `ln tau`, `logit(eta / 2)`.

use crate::data::Dataset;
use crate::error::{Error, Result};

use super::dependence::{DependenceKind, DependenceModel};
use super::trend::TermSet;
use super::MspModel;

const ETA_CEILING: f64 = 2.0 * (1.0 - 1e-12);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub terms: TermSet,
    pub kind: DependenceKind,
    /// Magnitude used to bring trend coefficients to order one.
    pub scale: f64,
}

impl ParamLayout {
    pub fn new(terms: TermSet, kind: DependenceKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("coefficient scale must be positive, got {scale}")));
        }
        Ok(ParamLayout { terms, kind, scale })
    }

    /// Layout whose coefficient scale is the mean absolute data value.
    pub fn for_data(terms: TermSet, kind: DependenceKind, data: &Dataset) -> Result<Self> {
        let n = (data.n_sites() * data.n_years()) as f64;
        let mean_abs = data.rows().flatten().map(|v| v.abs()).sum::<f64>() / n;
        Self::new(terms, kind, if mean_abs > 0.0 { mean_abs } else { 1.0 })
    }

    pub fn dim(&self) -> usize {
        self.terms.n_trend_params() + 2
    }

    pub fn to_vector(&self, model: &MspModel) -> Result<Vec<f64>> {
        let t = &model.trend;
        if t.mu_terms.iter().map(|x| x.0).ne(self.terms.mu.iter().copied())
            || t.sigma_terms.iter().map(|x| x.0).ne(self.terms.sigma.iter().copied())
        {
            return Err(Error::DimensionMismatch("model terms do not match the layout".into()));
        }
        if model.dep.kind != self.kind {
            return Err(Error::InvalidParameter("dependence kind does not match the layout".into()));
        }
        model.dep.validate()?;
        let sigma0 = t.sigma_terms[0].1;
        if !(sigma0 > 0.0) {
            return Err(Error::InvalidSurface(format!("scale intercept must be positive, got {sigma0}")));
        }
        let mut v = Vec::with_capacity(self.dim());
        v.extend(t.mu_terms.iter().map(|x| x.1 / self.scale));
        v.push((sigma0 / self.scale).ln());
        v.extend(t.sigma_terms[1..].iter().map(|x| x.1 / self.scale));
        v.push(t.xi);
        v.push(model.dep.tau.ln());
        let half = model.dep.eta.min(ETA_CEILING) / 2.0;
        v.push((half / (1.0 - half)).ln());
        Ok(v)
    }

    pub fn to_model(&self, v: &[f64]) -> Result<MspModel> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("expected {} parameters, got {}", self.dim(), v.len())));
        }
        let (nm, ns) = (self.terms.mu.len(), self.terms.sigma.len());
        let mu: Vec<f64> = v[..nm].iter().map(|c| c * self.scale).collect();
        let mut sigma = Vec::with_capacity(ns);
        sigma.push(v[nm].exp() * self.scale);
        sigma.extend(v[nm + 1..nm + ns].iter().map(|c| c * self.scale));
        let xi = v[nm + ns];
        let tau = v[nm + ns + 1].exp();
        let eta = 2.0 / (1.0 + (-v[nm + ns + 2]).exp());
        Ok(MspModel {
            trend: self.terms.surface(&mu, &sigma, xi)?,
            dep: DependenceModel::new(self.kind, tau, eta)?,
        })
    }
}
