//! Bayesian multi-touch marketing attribution.
//!
//! Fits a decaying-effect + interaction customer-behavior model to journey
//! data with an adaptive Hamiltonian Monte Carlo sampler, then assigns
//! per-channel credit as posterior removal effects.
//!
//! The pipeline: [`simulator`] generates synthetic journeys with known
//! parameters, [`model`] defines the domain types and predictor,
//! [`likelihood`] evaluates the log-posterior and its analytic gradient over
//! an unconstrained reparameterization, [`sampler`] draws from any such
//! target, [`fit`] ties the pieces together, and [`attribution`] converts
//! posterior draws into per-channel credit distributions.

pub mod attribution;
pub mod error;
pub mod fit;
pub mod likelihood;
pub mod math;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{Journey, Link, ModelParams, ModelSpec, Touch};
