//! Exact Gaussian sampling on a finite site set via Cholesky factors.

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Site;
use crate::error::{Error, Result};
use crate::msp::{site_distance, DistanceMode};
use crate::rng::rng_from;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

/// Centered Gaussian vector with a fixed covariance matrix.
#[derive(Debug, Clone)]
pub struct GaussianField {
    chol: Cholesky<f64, Dyn>,
    /// Diagonal jitter that was needed for the factorization.
    pub jitter: f64,
}

impl GaussianField {
    /// Factorizes `cov`, adding diagonal jitter from 1e-10 up to 1e-6 if the
    /// matrix is not numerically positive definite.
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::DimensionMismatch("covariance must be square".into()));
        }
        if let Some(chol) = cov.clone().cholesky() {
            return Ok(GaussianField { chol, jitter: 0.0 });
        }
        let n = cov.nrows();
        let mut jitter = JITTER_START;
        while jitter <= JITTER_MAX * (1.0 + 1e-9) {
            if let Some(chol) = (&cov + DMatrix::identity(n, n) * jitter).cholesky() {
                return Ok(GaussianField { chol, jitter });
            }
            jitter *= 10.0;
        }
        Err(Error::Simulation(format!("covariance not positive definite after jitter {JITTER_MAX}")))
    }

    /// Correlation matrix `corr(distance)` over `sites`.
    pub fn from_correlation(sites: &[Site], corr: impl Fn(f64) -> f64, mode: DistanceMode) -> Result<Self> {
        let n = sites.len();
        let mut m = DMatrix::identity(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let c = corr(site_distance(&sites[i], &sites[j], mode)?);
                m[(i, j)] = c;
                m[(j, i)] = c;
            }
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dim();
        let e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let l = self.chol.l_dirty();
        (0..n).map(|i| (0..=i).map(|j| l[(i, j)] * e[j]).sum()).collect()
    }
}

/// One draw of correlated standard normals over `sites`.
pub fn gp_sample(sites: &[Site], corr: impl Fn(f64) -> f64, mode: DistanceMode, seed: u64) -> Result<Vec<f64>> {
    let field = GaussianField::from_correlation(sites, corr, mode)?;
    Ok(field.sample(&mut rng_from(seed, &[])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Site> {
        xs.iter()
            .enumerate()
            .map(|(i, &x)| Site { norm_lat: x, norm_lon: 0.0, norm_alt: 0.0, ..Site::new(format!("s{i}"), x, 0.0, 0.0) })
            .collect()
    }

    #[test]
    fn single_site_is_standard_normal() {
        let sites = line(&[0.0]);
        let draws: Vec<f64> = (0..20_000).map(|s| gp_sample(&sites, |_| 0.0, DistanceMode::Normalized, s).unwrap()[0]).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.03 && (var - 1.0).abs() < 0.04, "{mean} {var}");
    }

    #[test]
    fn coincident_sites_need_jitter_and_agree() {
        let sites = line(&[0.3, 0.3]);
        let field = GaussianField::from_correlation(&sites, |h| (-h).exp(), DistanceMode::Normalized).unwrap();
        assert!(field.jitter > 0.0 && field.jitter <= 1e-6);
        let x = field.sample(&mut rng_from(1, &[]));
        assert!((x[0] - x[1]).abs() < 1e-3);
    }

    #[test]
    fn sample_correlation() {
        let sites = line(&[0.0, 1.0]);
        let field = GaussianField::from_correlation(&sites, |_| 0.5, DistanceMode::Normalized).unwrap();
        let mut rng = rng_from(7, &[]);
        let n = 100_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let v = field.sample(&mut rng);
            sxy += v[0] * v[1];
            sxx += v[0] * v[0];
            syy += v[1] * v[1];
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!((r - 0.5).abs() < 0.01, "{r}");
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(GaussianField::new(m), Err(Error::Simulation(_))));
    }
}
