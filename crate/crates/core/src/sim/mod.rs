//! Simulation of Gaussian and max-stable fields, QQ diagnostics and the
//! synthetic model ensemble.

pub mod ensemble;
pub mod field;
pub mod gaussian;
pub mod qq;

pub use ensemble::{default_sites, default_truth, synthetic_ensemble, EnsembleConfig, SyntheticEnsemble};
pub use field::{simulate_brown_resnick, simulate_field, simulate_msp, simulate_schlather, to_gev_margins, SimulatedField};
pub use gaussian::{gp_sample, GaussianField};
pub use qq::{groupwise_maxima_qq, QqDiagnostic};
