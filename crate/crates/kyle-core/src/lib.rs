//! Numerical laboratory for the continuous-time Kyle equilibrium with
//! stochastic noise-trading volatility.
//!
//! The crate builds the equilibrium from its deterministic and stochastic
//! blocks (the transport map of the value law, the heat-kernel pricing
//! field, the singular filtering BSDE and the implied Sigma/lambda pair),
//! simulates equilibrium paths, and verifies the resulting profit,
//! martingale and option-implied-volatility structure by Monte Carlo.

pub mod dist;
pub mod equil;
pub mod error;
pub mod filter;
pub mod grid;
pub mod math;
pub mod options;
pub mod paths;
pub mod rfield;
pub mod runner;
pub mod scenario;
pub mod vol;

pub use error::{Error, Result};
