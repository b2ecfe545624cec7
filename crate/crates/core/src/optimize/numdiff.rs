//! Central-difference gradients and Hessians.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Per-coordinate step `relative * max(1, |x_k|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRule {
    pub relative: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule { relative: 1e-4 }
    }
}

impl StepRule {
    pub fn step(&self, x: f64) -> f64 {
        self.relative * x.abs().max(1.0)
    }
}

fn eval<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], coordinate: usize) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Differentiation { coordinate })
    }
}

pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], rule: StepRule) -> Result<Vec<f64>> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = rule.step(x[k]);
            xs[k] = x[k] + h;
            let up = eval(&f, &xs, k)?;
            xs[k] = x[k] - h;
            let down = eval(&f, &xs, k)?;
            xs[k] = x[k];
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Central-difference Jacobian of a vector-valued function; row `i` holds
/// the gradient of output `i`.
pub fn numerical_jacobian<F: Fn(&[f64]) -> Option<Vec<f64>>>(f: F, x: &[f64], rule: StepRule) -> Result<Vec<Vec<f64>>> {
    let mut xs = x.to_vec();
    let mut columns = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let h = rule.step(x[k]);
        xs[k] = x[k] + h;
        let up = f(&xs).filter(|v| v.iter().all(|e| e.is_finite()));
        xs[k] = x[k] - h;
        let down = f(&xs).filter(|v| v.iter().all(|e| e.is_finite()));
        xs[k] = x[k];
        match (up, down) {
            (Some(u), Some(d)) if u.len() == d.len() => {
                columns.push(u.iter().zip(&d).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>())
            }
            _ => return Err(Error::Differentiation { coordinate: k }),
        }
    }
    let m = columns.first().map_or(0, Vec::len);
    Ok((0..m).map(|i| columns.iter().map(|c| c[i]).collect()).collect())
}

#[derive(Debug, Clone)]
pub struct HessianResult {
    pub matrix: DMatrix<f64>,
    /// Ratio of largest to smallest absolute eigenvalue (infinite if singular).
    pub condition_number: f64,
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Nested central differences; returns a symmetric matrix.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], rule: StepRule) -> Result<HessianResult> {
    let n = x.len();
    let mut xs = x.to_vec();
    let f0 = eval(&f, x, 0)?;
    let h: Vec<f64> = x.iter().map(|&v| rule.step(v)).collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        xs[i] = x[i] + h[i];
        let up = eval(&f, &xs, i)?;
        xs[i] = x[i] - h[i];
        let down = eval(&f, &xs, i)?;
        xs[i] = x[i];
        m[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in i + 1..n {
            let mut corner = |si: f64, sj: f64| {
                xs[i] = x[i] + si * h[i];
                xs[j] = x[j] + sj * h[j];
                let v = eval(&f, &xs, i);
                xs[i] = x[i];
                xs[j] = x[j];
                v
            };
            let d = corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?;
            m[(i, j)] = d / (4.0 * h[i] * h[j]);
        }
    }
    // the cross difference is symmetric in (i, j); mirror the upper triangle
    for i in 0..n {
        for j in i + 1..n {
            m[(j, i)] = m[(i, j)];
        }
    }
    Ok(HessianResult { condition_number: condition_number(&m), matrix: m })
}
