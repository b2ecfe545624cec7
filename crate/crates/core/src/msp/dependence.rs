//! Dependence structures and bivariate exponent functions on unit-Fréchet
//! margins, `Pr{Z1 <= z1, Z2 <= z2} = exp(-V(z1, z2))`.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DependenceKind {
    /// Extremal Gaussian process with a powered-exponential correlation.
    Schlather,
    /// Brown–Resnick process with a power variogram.
    BrownResnick,
}

impl DependenceKind {
    pub fn label(&self) -> &'static str {
        match self {
            DependenceKind::Schlather => "schlather",
            DependenceKind::BrownResnick => "brown-resnick",
        }
    }
}

impl std::str::FromStr for DependenceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "schlather" => Ok(DependenceKind::Schlather),
            "brown-resnick" | "brownresnick" | "br" => Ok(DependenceKind::BrownResnick),
            other => Err(Error::InvalidParameter(format!("unknown characterization '{other}'"))),
        }
    }
}

/// Range `tau > 0` and smoothness `eta` in (0, 2], shared by both kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceModel {
    pub kind: DependenceKind,
    pub tau: f64,
    pub eta: f64,
}

fn check_box(tau: f64, eta: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("range must be positive, got {tau}")));
    }
    if !(eta > 0.0 && eta <= 2.0) {
        return Err(Error::InvalidParameter(format!("smoothness must lie in (0, 2], got {eta}")));
    }
    Ok(())
}

fn check_distance(h: f64) -> Result<()> {
    if h >= 0.0 && !h.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!("distance must be nonnegative, got {h}")))
    }
}

impl DependenceModel {
    pub fn new(kind: DependenceKind, tau: f64, eta: f64) -> Result<Self> {
        check_box(tau, eta)?;
        Ok(DependenceModel { kind, tau, eta })
    }

    pub fn validate(&self) -> Result<()> {
        check_box(self.tau, self.eta)
    }

    /// Bivariate dependence between two sites `h` apart.
    pub fn at_distance(&self, h: f64) -> Result<PairDependence> {
        Ok(match self.kind {
            DependenceKind::Schlather => PairDependence::Schlather {
                rho: powered_exp_corr(h, self.tau, self.eta)?,
            },
            DependenceKind::BrownResnick => PairDependence::BrownResnick {
                a: br_variogram(h, self.tau, self.eta)?.sqrt(),
            },
        })
    }
}

/// `rho(h) = exp{-(h / tau)^eta}`.
pub fn powered_exp_corr(h: f64, tau: f64, eta: f64) -> Result<f64> {
    check_box(tau, eta)?;
    check_distance(h)?;
    Ok((-(h / tau).powf(eta)).exp())
}

/// Variogram `2 (h / tau)^eta`.
pub fn br_variogram(h: f64, tau: f64, eta: f64) -> Result<f64> {
    check_box(tau, eta)?;
    check_distance(h)?;
    Ok(2.0 * (h / tau).powf(eta))
}

fn check_z(z1: f64, z2: f64) -> Result<()> {
    if z1 > 0.0 && z2 > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("unit-Fréchet arguments must be positive, got ({z1}, {z2})")))
    }
}

/// Exponent function of the extremal Gaussian model,
/// `V = (z1 + z2 + sqrt(z1^2 - 2 rho z1 z2 + z2^2)) / (2 z1 z2)`.
pub fn schlather_v(z1: f64, z2: f64, rho: f64) -> Result<f64> {
    check_z(z1, z2)?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("correlation must lie in [0, 1], got {rho}")));
    }
    Ok(PairDependence::Schlather { rho }.v(z1, z2))
}

/// Hüsler–Reiss exponent with dependence parameter `a >= 0`.
pub fn br_v(z1: f64, z2: f64, a: f64) -> Result<f64> {
    check_z(z1, z2)?;
    if !(a >= 0.0) {
        return Err(Error::InvalidParameter(format!("variogram root must be nonnegative, got {a}")));
    }
    Ok(PairDependence::BrownResnick { a }.v(z1, z2))
}

/// `V` with its first and mixed partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentPartials {
    pub v: f64,
    pub v1: f64,
    pub v2: f64,
    pub v12: f64,
}

/// Dependence between one pair of sites, already evaluated at their distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairDependence {
    Schlather { rho: f64 },
    BrownResnick { a: f64 },
}

impl PairDependence {
    /// Extremal coefficient `z V(z, z)`.
    pub fn extremal_coefficient(&self) -> f64 {
        match *self {
            PairDependence::Schlather { rho } => 1.0 + ((1.0 - rho) / 2.0).sqrt(),
            PairDependence::BrownResnick { a } => 2.0 * std_normal_cdf(a / 2.0),
        }
    }

    pub fn v(&self, z1: f64, z2: f64) -> f64 {
        match *self {
            PairDependence::Schlather { rho } => {
                let s = z1.max(z2);
                let (u1, u2) = (z1 / s, z2 / s);
                let r = (u1 * u1 - 2.0 * rho * u1 * u2 + u2 * u2).max(0.0).sqrt();
                (u1 + u2 + r) / (2.0 * u1 * u2) / s
            }
            PairDependence::BrownResnick { a } => {
                if a == 0.0 {
                    return 1.0 / z1.min(z2);
                }
                let d = (z2.ln() - z1.ln()) / a;
                std_normal_cdf(0.5 * a + d) / z1 + std_normal_cdf(0.5 * a - d) / z2
            }
        }
    }

    pub fn partials(&self, z1: f64, z2: f64) -> ExponentPartials {
        let s = z1.max(z2);
        let p = self.scaled_partials(z1 / s, z2 / s, (z1 / s).ln(), (z2 / s).ln());
        ExponentPartials {
            v: p.v / s,
            v1: p.v1 / (s * s),
            v2: p.v2 / (s * s),
            v12: p.v12 / (s * s * s),
        }
    }

    // Partials at (u1, u2) with max(u1, u2) = 1; `lu` are their logs.
    fn scaled_partials(&self, u1: f64, u2: f64, lu1: f64, lu2: f64) -> ExponentPartials {
        match *self {
            PairDependence::Schlather { rho } => {
                let r = (u1 * u1 - 2.0 * rho * u1 * u2 + u2 * u2).max(0.0).sqrt();
                let v = (u1 + u2 + r) / (2.0 * u1 * u2);
                let (v1, v2, v12) = if r > 0.0 {
                    (
                        -(1.0 + (u2 - rho * u1) / r) / (2.0 * u1 * u1),
                        -(1.0 + (u1 - rho * u2) / r) / (2.0 * u2 * u2),
                        -(1.0 - rho * rho) / (2.0 * r * r * r),
                    )
                } else {
                    (f64::NAN, f64::NAN, f64::NAN)
                };
                ExponentPartials { v, v1, v2, v12 }
            }
            PairDependence::BrownResnick { a } => {
                if a == 0.0 {
                    return ExponentPartials { v: 1.0 / u1.min(u2), v1: f64::NAN, v2: f64::NAN, v12: f64::NAN };
                }
                let d = (lu2 - lu1) / a;
                let w = 0.5 * a + d;
                let (cw, cv) = (std_normal_cdf(w), std_normal_cdf(0.5 * a - d));
                ExponentPartials {
                    v: cw / u1 + cv / u2,
                    v1: -cw / (u1 * u1),
                    v2: -cv / (u2 * u2),
                    v12: -std_normal_pdf(w) / (a * u1 * u1 * u2),
                }
            }
        }
    }

    /// Log of the bivariate density `(V1 V2 - V12) exp(-V)` on unit-Fréchet
    /// margins, evaluated on a rescaled pair so it neither overflows nor
    /// underflows for very large or small arguments.
    pub fn log_density_unit(&self, z1: f64, z2: f64) -> Result<f64> {
        check_z(z1, z2)?;
        self.log_density_with_logs(z1, z1.ln(), z2, z2.ln())
    }

    /// As [`Self::log_density_unit`], reusing precomputed `ln z`.
    pub fn log_density_with_logs(&self, z1: f64, lz1: f64, z2: f64, lz2: f64) -> Result<f64> {
        if let PairDependence::BrownResnick { a } = *self {
            if a > 0.0 {
                // (V1 V2 - V12) z1^2 z2^2 = Phi(w) Phi(a - w) + z2 phi(w) / a
                let w = 0.5 * a + (lz2 - lz1) / a;
                let (cw, cv) = (std_normal_cdf(w), std_normal_cdf(a - w));
                let mixed = (lz2 - 0.5 * w * w - a.ln() - LN_SQRT_2PI).exp();
                let core = cw * cv + mixed;
                if !(core > 0.0) || !core.is_finite() {
                    return Err(Error::NumericFailure(format!(
                        "nonpositive bivariate density term {core} at ({z1}, {z2}) for {self:?}"
                    )));
                }
                return Ok(core.ln() - 2.0 * (lz1 + lz2) - cw / z1 - cv / z2);
            }
        }
        let (s, ls) = if z1 >= z2 { (z1, lz1) } else { (z2, lz2) };
        let p = self.scaled_partials(z1 / s, z2 / s, lz1 - ls, lz2 - ls);
        let core = p.v1 * p.v2 - s * p.v12;
        if !(core > 0.0) || !core.is_finite() {
            return Err(Error::NumericFailure(format!(
                "nonpositive bivariate density term {core} at ({z1}, {z2}) for {self:?}"
            )));
        }
        Ok(core.ln() - 4.0 * ls - p.v / s)
    }
}

/// Extremal coefficient `theta(h)` implied by a dependence model.
pub fn extremal_coefficient_model(h: f64, dep: &DependenceModel) -> Result<f64> {
    Ok(dep.at_distance(h)?.extremal_coefficient())
}

/// `a(h) = sqrt(2) (h / tau)^(eta / 2)`, the Hüsler–Reiss parameter.
pub fn br_dependence_root(h: f64, tau: f64, eta: f64) -> Result<f64> {
    check_box(tau, eta)?;
    check_distance(h)?;
    Ok(SQRT_2 * (h / tau).powf(0.5 * eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn correlation_and_variogram_examples() {
        assert_eq!(powered_exp_corr(0.0, 0.7, 1.3).unwrap(), 1.0);
        assert_relative_eq!(powered_exp_corr(0.7, 0.7, 1.3).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(powered_exp_corr(2.0, 1.0, 2.0).unwrap(), (-4.0f64).exp(), epsilon = 1e-15);
        assert_eq!(br_variogram(0.0, 1.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(br_variogram(0.4, 0.4, 0.5).unwrap(), 2.0, epsilon = 1e-15);
        assert_relative_eq!(br_variogram(4.0, 2.0, 1.0).unwrap(), 4.0, epsilon = 1e-15);
        assert_relative_eq!(br_dependence_root(4.0, 2.0, 1.0).unwrap(), 2.0, epsilon = 1e-15);

        assert!(powered_exp_corr(1.0, 0.0, 1.0).is_err());
        assert!(powered_exp_corr(1.0, 1.0, 2.5).is_err());
        assert!(powered_exp_corr(1.0, 1.0, 0.0).is_err());
        assert!(powered_exp_corr(-1.0, 1.0, 1.0).is_err());
        assert!(br_variogram(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn correlation_strictly_decreasing() {
        let mut prev = 1.0;
        for i in 1..100 {
            let r = powered_exp_corr(i as f64 * 0.03, 0.5, 1.5).unwrap();
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn schlather_examples() {
        for z in [0.3, 1.0, 40.0] {
            assert_relative_eq!(schlather_v(z, z, 1.0).unwrap(), 1.0 / z, max_relative = 1e-14);
        }
        assert_relative_eq!(schlather_v(1.0, 1.0, 0.0).unwrap(), 1.0 + 0.5f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(schlather_v(2.0, 1e12, 0.3).unwrap(), 0.5, max_relative = 1e-9);
        assert!(matches!(schlather_v(0.0, 1.0, 0.5), Err(Error::Domain(_))));
        assert!(schlather_v(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn schlather_matches_printed_form() {
        // 0.5 (1/z1 + 1/z2) {1 + sqrt(1 - 2 (rho + 1) z1 z2 / (z1 + z2)^2)}
        for &(z1, z2, rho) in &[(1.3f64, 2.1f64, 0.4f64), (0.2, 9.0, 0.0), (5.0, 5.5, 0.95)] {
            let printed = 0.5 * (1.0 / z1 + 1.0 / z2)
                * (1.0 + (1.0 - 2.0 * (rho + 1.0) * z1 * z2 / ((z1 + z2) * (z1 + z2))).sqrt());
            assert_relative_eq!(schlather_v(z1, z2, rho).unwrap(), printed, max_relative = 1e-13);
        }
    }

    #[test]
    fn brown_resnick_examples() {
        for z in [0.3, 1.0, 40.0] {
            assert_relative_eq!(br_v(z, z, 0.0).unwrap(), 1.0 / z, max_relative = 1e-14);
        }
        assert_relative_eq!(br_v(1.3, 0.7, 80.0).unwrap(), 1.0 / 1.3 + 1.0 / 0.7, max_relative = 1e-12);
        assert_relative_eq!(br_v(1.0, 1.0, 2.0).unwrap(), 2.0 * std_normal_cdf(1.0), epsilon = 1e-15);
        assert!((br_v(1.0, 1.0, 2.0).unwrap() - 1.68269).abs() < 5e-6);
        assert!(br_v(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn extremal_coefficient_examples() {
        for kind in [DependenceKind::Schlather, DependenceKind::BrownResnick] {
            let dep = DependenceModel::new(kind, 0.4, 1.0).unwrap();
            assert_eq!(extremal_coefficient_model(0.0, &dep).unwrap(), 1.0);
        }
        let ceiling = PairDependence::Schlather { rho: 0.0 }.extremal_coefficient();
        assert!((ceiling - (1.0 + FRAC_1_SQRT_2)).abs() < 1e-12);
        let far = PairDependence::BrownResnick { a: 20.0 }.extremal_coefficient();
        assert!((far - 2.0).abs() < 1e-6);
        let dep = DependenceModel::new(DependenceKind::BrownResnick, 0.1, 1.0).unwrap();
        assert!((extremal_coefficient_model(1e4, &dep).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn extremal_coefficient_monotone_in_distance() {
        for kind in [DependenceKind::Schlather, DependenceKind::BrownResnick] {
            let dep = DependenceModel::new(kind, 0.3, 1.4).unwrap();
            let mut prev = 1.0;
            for i in 0..100 {
                let t = extremal_coefficient_model(i as f64 * 0.02, &dep).unwrap();
                assert!(t >= prev && (1.0..=2.0).contains(&t));
                prev = t;
            }
        }
    }

    fn pair_strategy() -> impl Strategy<Value = PairDependence> {
        prop_oneof![
            (0.0..0.98f64).prop_map(|rho| PairDependence::Schlather { rho }),
            (0.05..6.0f64).prop_map(|a| PairDependence::BrownResnick { a }),
        ]
    }

    #[test]
    fn theta_independent_of_level() {
        for dep in [PairDependence::Schlather { rho: 0.3 }, PairDependence::BrownResnick { a: 1.1 }] {
            let t = dep.extremal_coefficient();
            for z in [0.5, 1.0, 7.0] {
                assert_relative_eq!(z * dep.v(z, z), t, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn marginal_consistency() {
        for dep in [PairDependence::Schlather { rho: 0.6 }, PairDependence::BrownResnick { a: 0.8 }] {
            assert!((dep.v(1.7, 1e8) - 1.0 / 1.7).abs() < 1e-6);
            assert!((dep.v(1e8, 0.4) - 1.0 / 0.4).abs() < 1e-6);
        }
    }

    // Closed-form partials against central differences with step 1e-6 z.
    fn check_partials(dep: PairDependence, z1: f64, z2: f64) {
        let p = dep.partials(z1, z2);
        let (h1, h2) = (1e-6 * z1, 1e-6 * z2);
        let v1 = (dep.v(z1 + h1, z2) - dep.v(z1 - h1, z2)) / (2.0 * h1);
        let v2 = (dep.v(z1, z2 + h2) - dep.v(z1, z2 - h2)) / (2.0 * h2);
        // mixed partial as the difference of the (separately checked) V1 in z2
        let v12 = (dep.partials(z1, z2 + h2).v1 - dep.partials(z1, z2 - h2).v1) / (2.0 * h2);
        assert_relative_eq!(p.v, dep.v(z1, z2), max_relative = 1e-13);
        // central differences of V cannot resolve below roughly eps * V / h
        let floor = |h: f64| 1e-9 * p.v / h * 1e-6;
        assert!((p.v1 - v1).abs() <= 1e-5 * v1.abs() + floor(h1), "{dep:?} {z1} {z2}: {} vs {v1}", p.v1);
        assert!((p.v2 - v2).abs() <= 1e-5 * v2.abs() + floor(h2), "{dep:?} {z1} {z2}: {} vs {v2}", p.v2);
        assert!((p.v12 - v12).abs() <= 1e-5 * v12.abs() + floor(h2) / z1, "{dep:?} {z1} {z2}: {} vs {v12}", p.v12);
    }

    #[test]
    fn partials_match_finite_differences() {
        let mut rng = crate::rng::rng_from(17, &[]);
        use rand::Rng;
        for i in 0..100 {
            let z1 = (rng.random_range(-1.5..2.5f64)).exp();
            let z2 = (rng.random_range(-1.5..2.5f64)).exp();
            let dep = if i % 2 == 0 {
                PairDependence::Schlather { rho: rng.random_range(0.0..0.95) }
            } else {
                PairDependence::BrownResnick { a: rng.random_range(0.2..4.0) }
            };
            check_partials(dep, z1, z2);
        }
    }

    #[test]
    fn degenerate_dependence_is_reported() {
        let perfect = PairDependence::Schlather { rho: 1.0 };
        assert!(matches!(perfect.log_density_unit(1.0, 2.0), Err(Error::NumericFailure(_))));
        let perfect = PairDependence::BrownResnick { a: 0.0 };
        assert!(matches!(perfect.log_density_unit(1.0, 2.0), Err(Error::NumericFailure(_))));
        assert!(matches!(
            PairDependence::BrownResnick { a: 1.0 }.log_density_unit(-1.0, 2.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn density_finite_at_extreme_arguments() {
        for dep in [PairDependence::Schlather { rho: 0.5 }, PairDependence::BrownResnick { a: 1.0 }] {
            for (z1, z2) in [(1e150, 3e150), (1e-150, 2e-150), (1e-8, 1e8)] {
                let lf = dep.log_density_unit(z1, z2).unwrap();
                assert!(lf.is_finite(), "{dep:?} at ({z1}, {z2})");
            }
        }
    }

    proptest! {
        #[test]
        fn exponent_is_homogeneous(dep in pair_strategy(), z1 in 0.05..50.0f64, z2 in 0.05..50.0f64, c in 0.01..100.0f64) {
            let lhs = dep.v(c * z1, c * z2);
            let rhs = dep.v(z1, z2) / c;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
        }

        #[test]
        fn exponent_bounds(dep in pair_strategy(), z1 in 0.05..50.0f64, z2 in 0.05..50.0f64) {
            let v = dep.v(z1, z2);
            prop_assert!(v >= (1.0 / z1).max(1.0 / z2) * (1.0 - 1e-12));
            prop_assert!(v <= (1.0 / z1 + 1.0 / z2) * (1.0 + 1e-12));
        }
    }
}
