//! Bayesian joint modelling of sparse nonlinear longitudinal measurements and
//! a primary outcome, fitted by Metropolis-within-Gibbs sampling.

pub mod cli;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod model;
pub mod simulator;
pub mod sampler;

pub use error::{Error, Result};
