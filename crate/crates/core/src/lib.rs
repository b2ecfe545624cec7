pub mod bma;
pub mod data;
pub mod error;
pub mod gev;
pub mod msp;
pub mod optimize;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
