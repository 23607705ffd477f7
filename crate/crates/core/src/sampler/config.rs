use crate::error::{Error, Result};
use crate::model::{ErrorModel, Family, HyperSpec, ParameterState};

/// Iteration schedule: total sweeps, burn-in, and thinning interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            iterations: 2_000_000,
            burn_in: 10_000,
            thin: 50,
        }
    }
}

impl Schedule {
    pub fn new(iterations: usize, burn_in: usize, thin: usize) -> Self {
        Self {
            iterations,
            burn_in,
            thin,
        }
    }

    /// Number of retained draws `floor((iterations - burn_in) / thin)`.
    pub fn retained(&self) -> usize {
        if self.thin == 0 {
            return 0;
        }
        self.iterations.saturating_sub(self.burn_in) / self.thin
    }

    /// Whether sweep `it` (1-based) is stored.
    pub fn keeps(&self, it: usize) -> bool {
        it > self.burn_in && (it - self.burn_in) % self.thin == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::config("thin", "must be at least 1"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::config("burn_in", "must be smaller than the number of iterations"));
        }
        if self.retained() == 0 {
            return Err(Error::config("thin", "schedule retains no draws"));
        }
        Ok(())
    }
}

/// Blocks held at their initial values instead of being updated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixedBlocks {
    /// Indices of fixed-effect components held fixed.
    pub alpha: Vec<usize>,
    pub beta: bool,
    pub mu_x: bool,
    pub sigma_x: bool,
    pub sigma2_eps: bool,
    pub rho: bool,
    pub phi: bool,
    /// Individuals whose random effects are held fixed.
    pub x: Vec<usize>,
}

impl FixedBlocks {
    /// Everything fixed except the blocks later switched back on.
    pub fn all(p: usize, m: usize) -> Self {
        Self {
            alpha: (0..p).collect(),
            beta: true,
            mu_x: true,
            sigma_x: true,
            sigma2_eps: true,
            rho: true,
            phi: true,
            x: (0..m).collect(),
        }
    }
}

/// Everything a chain needs beyond the data.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub schedule: Schedule,
    pub seed: u64,
    pub family: Family,
    pub error_model: ErrorModel,
    pub hyper: HyperSpec,
    /// Starting state; heuristic initial values when absent.
    pub init: Option<ParameterState>,
    pub fixed: FixedBlocks,
    /// When false every block samples from its prior conditional.
    pub likelihood: bool,
    /// Sweeps between Laplace refreshes of the α, β and ρ proposals. Values
    /// above 1 reuse a proposal built from an earlier state, which makes the
    /// kernel depend on chain history and biases the stationary distribution.
    pub refresh_every: usize,
    /// Update random effects across threads.
    pub parallel: bool,
    /// Follow each α, β and ρ independence step with a random-walk step
    /// scaled by the same Laplace covariance, so the chain can leave regions
    /// where the Gaussian proposal has lighter tails than the target.
    pub supplementary_rw: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            schedule: Schedule::default(),
            seed: 1,
            family: Family::Bernoulli,
            error_model: ErrorModel::Car1,
            hyper: HyperSpec::default(),
            init: None,
            fixed: FixedBlocks::default(),
            likelihood: true,
            refresh_every: 1,
            parallel: false,
            supplementary_rw: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.refresh_every == 0 {
            return Err(Error::config("refresh_every", "must be at least 1"));
        }
        Ok(())
    }
}
