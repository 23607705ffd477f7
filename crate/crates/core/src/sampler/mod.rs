//! Metropolis-within-Gibbs sampling of the joint posterior.

mod chain;
mod config;
mod conjugate;
mod gibbs;
mod laplace;
mod rng;

pub use chain::{
    initial_state, parameter_names, parameter_values, run_chain, run_chain_with_model, state_from_values, ChainMeta,
    ChainStore, ScalarChain,
};
pub use config::{FitConfig, FixedBlocks, Schedule};
pub use conjugate::{draw_mu_x, draw_phi, draw_sigma_eps, draw_sigma_x};
pub use gibbs::{gibbs_sweep, BlockTally, GibbsSampler, Tallies};
pub use laplace::{
    laplace_proposal, mh_independence_step, mh_step, numeric_derivatives, random_walk_step, FnTarget, LaplaceFit, LaplaceOptions, LogTarget,
    MhStep, Proposal,
};
pub use rng::{derive_seed, stream_rng};
