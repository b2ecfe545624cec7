//! Max-stable field simulation on a finite site set.
//!
//! Uses the extremal-functions construction: for each site in turn, Poisson
//! points are drawn from the spectral law tilted at that site and only
//! points that do not exceed the current field at earlier sites are kept.
//! This is exact for both families and needs about `k` points per site.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::data::{Dataset, Site};
use crate::error::{Error, Result};
use crate::msp::likelihood::from_unit_frechet;
use crate::msp::{
    br_variogram, evaluate_trend, powered_exp_corr, site_distance, DependenceKind, DependenceModel, DistanceMode,
    MspModel, TrendSurface,
};
use crate::rng::rng_from;

use super::gaussian::GaussianField;

/// Safety cap on Poisson points per simulated year.
pub const MAX_POINTS_PER_YEAR: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedField {
    pub data: Dataset,
    /// Years that hit the point cap twice and were kept as drawn.
    pub capped_years: usize,
    /// Years resampled once after hitting the cap.
    pub resampled_years: usize,
}

/// Sampler for the spectral function normalized to 1 at one origin site.
struct TiltedSpectral {
    origin: usize,
    /// Indices of the other sites, in the order of `field`.
    others: Vec<usize>,
    field: Option<GaussianField>,
    /// Schlather: correlation with the origin. Brown–Resnick: variogram to it.
    link: Vec<f64>,
}

impl TiltedSpectral {
    fn new(dep: &DependenceModel, dist: &DMatrix<f64>, origin: usize) -> Result<Self> {
        let k = dist.nrows();
        let others: Vec<usize> = (0..k).filter(|&i| i != origin).collect();
        let m = others.len();
        let (link, cov) = match dep.kind {
            DependenceKind::Schlather => {
                let rho = |h: f64| powered_exp_corr(h, dep.tau, dep.eta);
                let link = (0..k).map(|i| rho(dist[(i, origin)])).collect::<Result<Vec<_>>>()?;
                let mut cov = DMatrix::zeros(m, m);
                for (a, &i) in others.iter().enumerate() {
                    for (b, &j) in others.iter().enumerate() {
                        let c = if i == j { 1.0 } else { rho(dist[(i, j)])? };
                        cov[(a, b)] = c - link[i] * link[j];
                    }
                }
                (link, cov)
            }
            DependenceKind::BrownResnick => {
                let vario = |h: f64| br_variogram(h, dep.tau, dep.eta);
                let link = (0..k).map(|i| vario(dist[(i, origin)])).collect::<Result<Vec<_>>>()?;
                let mut cov = DMatrix::zeros(m, m);
                for (a, &i) in others.iter().enumerate() {
                    for (b, &j) in others.iter().enumerate() {
                        cov[(a, b)] = 0.5 * (link[i] + link[j] - vario(dist[(i, j)])?);
                    }
                }
                (link, cov)
            }
        };
        let field = if m > 0 { Some(GaussianField::new(cov)?) } else { None };
        Ok(TiltedSpectral { origin, others, field, link })
    }

    fn sample(&self, kind: DependenceKind, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let g = self.field.as_ref().map(|f| f.sample(rng)).unwrap_or_default();
        out[self.origin] = 1.0;
        match kind {
            DependenceKind::Schlather => {
                // W at the origin is Rayleigh under the tilt
                let e: f64 = Exp1.sample(rng);
                let r = (2.0 * e).sqrt();
                for (a, &i) in self.others.iter().enumerate() {
                    out[i] = (self.link[i] * r + g[a]).max(0.0) / r;
                }
            }
            DependenceKind::BrownResnick => {
                for (a, &i) in self.others.iter().enumerate() {
                    out[i] = (g[a] - 0.5 * self.link[i]).exp();
                }
            }
        }
    }
}

fn distance_matrix(sites: &[Site], mode: DistanceMode) -> Result<DMatrix<f64>> {
    let k = sites.len();
    let mut d = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i + 1..k {
            let h = site_distance(&sites[i], &sites[j], mode)?;
            d[(i, j)] = h;
            d[(j, i)] = h;
        }
    }
    Ok(d)
}

/// One year; returns `None` if the point cap is reached.
fn simulate_year(kind: DependenceKind, samplers: &[TiltedSpectral], rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let k = samplers.len();
    let mut z = vec![0.0; k];
    let mut y = vec![0.0; k];
    let mut points = 0;
    for n in 0..k {
        let mut gamma: f64 = Exp1.sample(rng);
        while 1.0 / gamma > z[n] {
            points += 1;
            if points > MAX_POINTS_PER_YEAR {
                return None;
            }
            samplers[n].sample(kind, rng, &mut y);
            let zeta = 1.0 / gamma;
            if (0..n).all(|i| zeta * y[i] < z[i]) {
                for (zi, yi) in z.iter_mut().zip(&y) {
                    *zi = zi.max(zeta * yi);
                }
            }
            let step: f64 = Exp1.sample(rng);
            gamma += step;
        }
    }
    Some(z)
}

/// Simulates a max-stable field with unit-Fréchet margins, one row per year.
pub fn simulate_field(sites: &[Site], dep: &DependenceModel, years: &[i32], seed: u64) -> Result<SimulatedField> {
    dep.validate()?;
    if sites.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let dist = distance_matrix(sites, DistanceMode::Normalized)?;
    let samplers = (0..sites.len())
        .map(|o| TiltedSpectral::new(dep, &dist, o))
        .collect::<Result<Vec<_>>>()?;
    let (mut capped, mut resampled) = (0, 0);
    let mut rows = Vec::with_capacity(years.len());
    for y in 0..years.len() {
        let row = match simulate_year(dep.kind, &samplers, &mut rng_from(seed, &[y as u64])) {
            Some(r) => r,
            None => {
                resampled += 1;
                let mut rng = rng_from(seed, &[y as u64, 1]);
                match simulate_year(dep.kind, &samplers, &mut rng) {
                    Some(r) => r,
                    None => {
                        capped += 1;
                        // keep the cap-limited draw; the flag records it
                        let mut rng = rng_from(seed, &[y as u64, 2]);
                        capped_draw(dep.kind, &samplers, &mut rng)
                    }
                }
            }
        };
        rows.push(row);
    }
    let data = Dataset::new(format!("{}-field", dep.kind.label()), sites.to_vec(), years.to_vec(), rows)?;
    Ok(SimulatedField { data, capped_years: capped, resampled_years: resampled })
}

// Same construction but stops at the point cap instead of failing.
fn capped_draw(kind: DependenceKind, samplers: &[TiltedSpectral], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = samplers.len();
    let mut z = vec![0.0; k];
    let mut y = vec![0.0; k];
    let per_site = MAX_POINTS_PER_YEAR / k;
    for n in 0..k {
        let mut gamma: f64 = Exp1.sample(rng);
        let mut count = 0;
        while 1.0 / gamma > z[n] && count < per_site {
            count += 1;
            samplers[n].sample(kind, rng, &mut y);
            let zeta = 1.0 / gamma;
            if (0..n).all(|i| zeta * y[i] < z[i]) {
                for (zi, yi) in z.iter_mut().zip(&y) {
                    *zi = zi.max(zeta * yi);
                }
            }
            gamma += rng.sample::<f64, _>(Exp1);
        }
        if z[n] == 0.0 {
            z[n] = 1.0 / gamma;
        }
    }
    z
}

pub fn simulate_schlather(sites: &[Site], dep: &DependenceModel, years: &[i32], seed: u64) -> Result<Dataset> {
    if dep.kind != DependenceKind::Schlather {
        return Err(Error::InvalidParameter("expected a Schlather dependence model".into()));
    }
    Ok(simulate_field(sites, dep, years, seed)?.data)
}

pub fn simulate_brown_resnick(sites: &[Site], dep: &DependenceModel, years: &[i32], seed: u64) -> Result<Dataset> {
    if dep.kind != DependenceKind::BrownResnick {
        return Err(Error::InvalidParameter("expected a Brown–Resnick dependence model".into()));
    }
    Ok(simulate_field(sites, dep, years, seed)?.data)
}

/// Maps unit-Fréchet values to data units with the site-wise trend margins.
pub fn to_gev_margins(unit: &Dataset, trend: &TrendSurface) -> Result<Dataset> {
    let margins = unit.sites().iter().map(|s| evaluate_trend(s, trend)).collect::<Result<Vec<_>>>()?;
    unit.map_values(|s, z| from_unit_frechet(z, &margins[s]))
}

/// Annual maxima in data units simulated from a full model.
pub fn simulate_msp(sites: &[Site], model: &MspModel, years: &[i32], seed: u64) -> Result<Dataset> {
    to_gev_margins(&simulate_field(sites, &model.dep, years, seed)?.data, &model.trend)
}
