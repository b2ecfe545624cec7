//! Derivative-free minimization, numerical differentiation and MSP fitting.

pub mod fit;
pub mod newton;
pub mod numdiff;
pub mod simplex;

pub use fit::{fit_msp, fit_term_set, FitReport, TicRow};
pub use newton::{fixed_hessian_newton, NewtonConfig};
pub use numdiff::{numerical_gradient, numerical_hessian, numerical_jacobian, StepRule};
pub use simplex::{simplex_minimize, OptimResult, OptimizerConfig};
