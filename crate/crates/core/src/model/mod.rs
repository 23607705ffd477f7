//! Deterministic core of the joint model: mean curves, CAR(1) covariance,
//! and the log densities that make up the unnormalized posterior.

mod covariance;
mod density;
mod hyper;
mod mean;
mod types;

pub use covariance::{build_error_cov, car1_correlation, car1_quad_log_det, car1_rho_derivatives, ErrorCovFactor};
pub use density::{JointModel, RandomEffectDensity};
pub use hyper::{HyperSpec, Hyperparameters, MatrixSpec, VectorSpec, RHO_MAX};
pub use mean::{growth_mean, LogisticGrowth, MeanFunction};
pub use types::{logistic, softplus, ErrorModel, Family, Individual, ParameterState};
