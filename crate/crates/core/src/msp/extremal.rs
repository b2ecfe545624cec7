//! Nonparametric extremal coefficient from the F-madogram.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const MIN_YEARS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalExtremalCoefficient {
    /// Estimate clipped to [1, 2].
    pub theta: f64,
    pub madogram: f64,
    /// Whether the raw estimate fell outside [1, 2].
    pub clipped: bool,
}

/// Empirical CDF values `rank / (n + 1)`, ties sharing their average rank.
fn pseudo_observations(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let avg_rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = avg_rank / (n as f64 + 1.0);
        }
        start = end;
    }
    out
}

pub fn f_madogram(a: &[f64], b: &[f64]) -> f64 {
    let (fa, fb) = (pseudo_observations(a), pseudo_observations(b));
    fa.iter().zip(&fb).map(|(u, v)| (u - v).abs()).sum::<f64>() / (2.0 * a.len() as f64)
}

/// `theta = (1 + 2 nu) / (1 - 2 nu)` from paired annual maxima.
pub fn extremal_coefficient_from_series(a: &[f64], b: &[f64]) -> Result<EmpiricalExtremalCoefficient> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch("paired series differ in length".into()));
    }
    if a.len() < MIN_YEARS {
        return Err(Error::InsufficientData { needed: MIN_YEARS, got: a.len() });
    }
    let nu = f_madogram(a, b);
    let raw = if 2.0 * nu < 1.0 { (1.0 + 2.0 * nu) / (1.0 - 2.0 * nu) } else { f64::INFINITY };
    let theta = raw.clamp(1.0, 2.0);
    Ok(EmpiricalExtremalCoefficient { theta, madogram: nu, clipped: theta != raw })
}

pub fn extremal_coefficient_empirical(data: &Dataset, pair: (usize, usize)) -> Result<EmpiricalExtremalCoefficient> {
    let k = data.n_sites();
    if pair.0 >= k || pair.1 >= k {
        return Err(Error::InvalidParameter(format!("site pair {pair:?} out of range for {k} sites")));
    }
    extremal_coefficient_from_series(&data.column(pair.0), &data.column(pair.1))
}
