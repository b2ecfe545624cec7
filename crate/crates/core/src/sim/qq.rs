//! Group-wise maxima QQ diagnostic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::msp::MspModel;
use crate::rng::derive_seed;

use super::field::simulate_msp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqDiagnostic {
    /// Sorted per-year cross-site maxima of the data.
    pub empirical: Vec<f64>,
    /// Rank-wise mean of the simulated sorted maxima.
    pub theoretical: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
    pub inside_fraction: f64,
}

fn sorted_year_maxima(data: &Dataset) -> Vec<f64> {
    let mut m: Vec<f64> = data.rows().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    m.sort_by(f64::total_cmp);
    m
}

/// Linear-interpolation percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Compares sorted annual cross-site maxima with `b` simulations from
/// `model`; the band holds the 2.5% and 97.5% rank-wise percentiles
/// (widened if needed to contain the rank-wise mean).
pub fn groupwise_maxima_qq(data: &Dataset, model: &MspModel, b: usize, seed: u64) -> Result<QqDiagnostic> {
    if b == 0 {
        return Err(Error::InvalidParameter("need at least one simulation".into()));
    }
    let empirical = sorted_year_maxima(data);
    // simulate on a canonical site order so the result ignores column order
    let mut sites = data.sites().to_vec();
    sites.sort_by(|a, b| a.id.cmp(&b.id));
    let sims: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|i| simulate_msp(&sites, model, data.years(), derive_seed(seed, &[i as u64])).map(|d| sorted_year_maxima(&d)))
        .collect::<Result<_>>()?;
    let n = empirical.len();
    let (mut theoretical, mut band_lo, mut band_hi) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut column = Vec::with_capacity(b);
    for r in 0..n {
        column.clear();
        column.extend(sims.iter().map(|s| s[r]));
        let mean = column.iter().sum::<f64>() / b as f64;
        column.sort_by(f64::total_cmp);
        theoretical.push(mean);
        band_lo.push(percentile(&column, 0.025).min(mean));
        band_hi.push(percentile(&column, 0.975).max(mean));
    }
    let inside = empirical
        .iter()
        .zip(band_lo.iter().zip(&band_hi))
        .filter(|(e, (lo, hi))| **lo <= **e && **e <= **hi)
        .count();
    Ok(QqDiagnostic { empirical, theoretical, band_lo, band_hi, inside_fraction: inside as f64 / n.max(1) as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize_coords, Site};
    use crate::msp::{DependenceKind, DependenceModel, TrendSurface};

    fn setup() -> (Dataset, MspModel) {
        let sites = normalize_coords(&[
            Site::new("a", 34.0, 126.0, 0.0),
            Site::new("b", 35.0, 128.0, 0.0),
            Site::new("c", 37.0, 127.0, 0.0),
            Site::new("d", 38.0, 129.0, 0.0),
        ])
        .unwrap()
        .0;
        let model = MspModel {
            trend: TrendSurface::constant(100.0, 30.0, 0.1),
            dep: DependenceModel::new(DependenceKind::BrownResnick, 0.5, 1.0).unwrap(),
        };
        let years: Vec<i32> = (1971..2001).collect();
        (simulate_msp(&sites, &model, &years, 99).unwrap(), model)
    }

    #[test]
    fn single_simulation_band_is_degenerate() {
        let (data, model) = setup();
        let qq = groupwise_maxima_qq(&data, &model, 1, 5).unwrap();
        assert_eq!(qq.band_lo, qq.theoretical);
        assert_eq!(qq.band_hi, qq.theoretical);
        assert_eq!(qq.empirical.len(), 30);
    }

    #[test]
    fn site_permutation_invariant() {
        let (data, model) = setup();
        let a = groupwise_maxima_qq(&data, &model, 20, 5).unwrap();
        let b = groupwise_maxima_qq(&data.permute_sites(&[2, 0, 3, 1]), &model, 20, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn band_contains_theoretical() {
        let (data, model) = setup();
        let qq = groupwise_maxima_qq(&data, &model, 200, 6).unwrap();
        for r in 0..30 {
            assert!(qq.band_lo[r] <= qq.theoretical[r] && qq.theoretical[r] <= qq.band_hi[r]);
        }
        assert!(qq.inside_fraction >= 0.8, "{}", qq.inside_fraction);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5), 3.0);
        assert!((percentile(&[0.0, 10.0], 0.025) - 0.25).abs() < 1e-12);
    }
}
