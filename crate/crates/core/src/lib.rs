//! Neural-network option pricing with smooth activations, soft no-arbitrage
//! penalties and inverse-map calibration, checked against closed-form
//! Black-Scholes.

pub mod arbitrage;
pub mod bs_oracle;
pub mod dataset;
pub mod error;
pub mod net;
pub mod calibrator;
pub mod cli;
pub mod trainer;

pub use error::{Error, Result};
