//! Univariate generalized extreme value distribution.
//!
//! Parameterization follows the climatological convention
//! `G(x) = exp{-(1 + xi (x - mu) / sigma)^(-1/xi)}`, so `xi > 0` is the
//! heavy-tailed Fréchet type and `xi < 0` has a finite upper endpoint.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Shapes with magnitude below this are evaluated with the Gumbel formulas.
pub const GUMBEL_THRESHOLD: f64 = 1e-8;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl GevParams {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        let p = GevParams { mu, sigma, xi };
        p.validate()?;
        Ok(p)
    }

    pub fn gumbel(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(mu, sigma, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.sigma.is_finite() && self.xi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite GEV parameters ({}, {}, {})",
                self.mu, self.sigma, self.xi
            )));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "GEV scale must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn is_gumbel(&self) -> bool {
        self.xi.abs() < GUMBEL_THRESHOLD
    }

    /// `1 + xi (x - mu) / sigma`; the support is where this is positive.
    /// Always positive in the Gumbel case.
    pub fn support_term(&self, x: f64) -> f64 {
        if self.is_gumbel() {
            1.0
        } else {
            1.0 + self.xi * (x - self.mu) / self.sigma
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        self.support_term(x) > 0.0
    }

    /// Lower endpoint for `xi > 0`, `-inf` otherwise.
    pub fn lower_endpoint(&self) -> f64 {
        if !self.is_gumbel() && self.xi > 0.0 {
            self.mu - self.sigma / self.xi
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Upper endpoint for `xi < 0`, `+inf` otherwise.
    pub fn upper_endpoint(&self) -> f64 {
        if !self.is_gumbel() && self.xi < 0.0 {
            self.mu - self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }

    /// `-log G(x)` for `x` strictly inside the support.
    fn neg_log_cdf_inside(&self, x: f64) -> f64 {
        let s = (x - self.mu) / self.sigma;
        if self.is_gumbel() {
            (-s).exp()
        } else {
            (-(self.xi * s).ln_1p() / self.xi).exp()
        }
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("non-finite argument {x}")))
    }
}

pub fn gev_cdf(x: f64, p: &GevParams) -> Result<f64> {
    p.validate()?;
    check_x(x)?;
    if !p.in_support(x) {
        return Ok(if p.xi > 0.0 { 0.0 } else { 1.0 });
    }
    Ok((-p.neg_log_cdf_inside(x)).exp())
}

pub fn gev_pdf(x: f64, p: &GevParams) -> Result<f64> {
    p.validate()?;
    check_x(x)?;
    if !p.in_support(x) {
        return Ok(0.0);
    }
    // g(x) = t^(xi+1) exp(-t) / sigma with t = -log G(x)
    let t = p.neg_log_cdf_inside(x);
    let log_density = (p.xi + 1.0) * t.ln() - t - p.sigma.ln();
    Ok(log_density.exp())
}

/// Quantile at non-exceedance probability `prob` in (0, 1).
pub fn gev_quantile(prob: f64, p: &GevParams) -> Result<f64> {
    p.validate()?;
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!(
            "quantile probability must lie in (0, 1), got {prob}"
        )));
    }
    quantile_from_log_prob(prob.ln(), p)
}

// With `y = -log(prob)` the quantile is mu + sigma (y^(-xi) - 1) / xi.
fn quantile_from_log_prob(log_prob: f64, p: &GevParams) -> Result<f64> {
    let log_y = (-log_prob).ln();
    let z = if p.is_gumbel() {
        p.mu - p.sigma * log_y
    } else {
        p.mu + p.sigma * (-p.xi * log_y).exp_m1() / p.xi
    };
    Ok(z)
}

/// Level exceeded on average once every `period` years.
pub fn return_level(period: f64, p: &GevParams) -> Result<f64> {
    p.validate()?;
    if !(period > 1.0) || !period.is_finite() {
        return Err(Error::Domain(format!(
            "return period must be finite and > 1, got {period}"
        )));
    }
    quantile_from_log_prob((-1.0 / period).ln_1p(), p)
}

/// Sample L-moments `l1`, `l2`, `l3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LMoments {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl LMoments {
    /// L-skewness `l3 / l2`; `None` when there is no dispersion.
    pub fn skewness(&self) -> Option<f64> {
        (self.l2 > 0.0).then(|| self.l3 / self.l2)
    }
}

/// Sample L-moments from unbiased probability-weighted moments of the
/// ascending-sorted sample.
pub fn sample_lmoments(x: &[f64]) -> Result<LMoments> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite sample value {bad}")));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));

    let nf = n as f64;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (i, &v) in sorted.iter().enumerate() {
        let i = i as f64;
        b0 += v;
        b1 += v * i / (nf - 1.0);
        b2 += v * i * (i - 1.0) / ((nf - 1.0) * (nf - 2.0));
    }
    b0 /= nf;
    b1 /= nf;
    b2 /= nf;

    let l2 = (2.0 * b1 - b0).max(0.0);
    Ok(LMoments {
        l1: b0,
        l2,
        l3: 6.0 * b2 - 6.0 * b1 + b0,
    })
}

/// L-moments estimator of the GEV parameters.
///
/// The polynomial approximation yields the shape in the `kappa = -xi`
/// parameterization; scale and location follow from the `kappa` form and
/// the shape is returned with its sign flipped to match [`gev_cdf`].
pub fn fit_lmoments(x: &[f64]) -> Result<GevParams> {
    let lm = sample_lmoments(x)?;
    fit_from_lmoments(&lm)
}

pub fn fit_from_lmoments(lm: &LMoments) -> Result<GevParams> {
    if !(lm.l2 > 16.0 * f64::EPSILON * lm.l1.abs()) || lm.l2 <= 0.0 {
        return Err(Error::DegenerateSample(format!(
            "second L-moment is {} (no dispersion)",
            lm.l2
        )));
    }
    let c = 2.0 * lm.l2 / (lm.l3 + 3.0 * lm.l2) - 2f64.ln() / 3f64.ln();
    let kappa = 7.8590 * c + 2.9554 * c * c;
    if !kappa.is_finite() || kappa <= -1.0 {
        return Err(Error::FitFailure(format!(
            "shape estimate {} outside the range where Gamma(1 + k) is defined",
            -kappa
        )));
    }

    let (mu, sigma) = if kappa.abs() < GUMBEL_THRESHOLD {
        let sigma = lm.l2 / 2f64.ln();
        (lm.l1 - EULER_GAMMA * sigma, sigma)
    } else {
        let g = gamma(1.0 + kappa);
        let sigma = kappa * lm.l2 / (g * (1.0 - 2f64.powf(-kappa)));
        (lm.l1 - sigma * (1.0 - g) / kappa, sigma)
    };
    if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(Error::FitFailure(format!(
            "non-admissible estimates mu = {mu}, sigma = {sigma}"
        )));
    }
    Ok(GevParams {
        mu,
        sigma,
        xi: if kappa.abs() < GUMBEL_THRESHOLD { 0.0 } else { -kappa },
    })
}

/// Inverse-CDF sampling, deterministic in `seed`.
pub fn gev_sample(p: &GevParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    p.validate()?;
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    let mut rng = rng_from(seed, &[]);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            gev_quantile(u, p)
        })
        .collect()
}
