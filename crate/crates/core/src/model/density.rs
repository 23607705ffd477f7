use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dist::inverse_gamma_log_density;
use crate::dist::inverse_wishart_log_density;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det_from_lower, mvn_log_density_lower, with_scratch};
use crate::model::{ErrorCovFactor, ErrorModel, Family, Hyperparameters, Individual, LogisticGrowth, MeanFunction};
use crate::model::ParameterState;

/// Structural choices of the joint model: mean curve, outcome family and
/// longitudinal error structure.
#[derive(Debug, Clone)]
pub struct JointModel {
    pub mean: Arc<dyn MeanFunction>,
    pub family: Family,
    pub error_model: ErrorModel,
}

impl Default for JointModel {
    fn default() -> Self {
        Self::new(Family::Bernoulli, ErrorModel::Car1)
    }
}

impl JointModel {
    /// Logistic-growth model with the given family and error structure.
    pub fn new(family: Family, error_model: ErrorModel) -> Self {
        Self {
            mean: Arc::new(LogisticGrowth),
            family,
            error_model,
        }
    }

    pub fn with_mean(mut self, mean: Arc<dyn MeanFunction>) -> Self {
        self.mean = mean;
        self
    }

    /// The ρ actually used for the covariance (0 under independent errors).
    pub fn effective_rho(&self, state: &ParameterState) -> f64 {
        if self.error_model.has_rho() {
            state.rho
        } else {
            0.0
        }
    }

    /// `log N(y_i; g(α, X_i; t_i), σ²_ε Σ_i(ρ))`.
    pub fn longit_loglik(&self, ind: &Individual, state: &ParameterState, i: usize) -> Result<f64> {
        let factor = ErrorCovFactor::for_individual(self.effective_rho(state), ind)?;
        let ll = self.longit_loglik_with_factor(ind, state.alpha.as_slice(), state.x_i(i), state.sigma2_eps, &factor);
        if ll.is_finite() {
            Ok(ll)
        } else {
            Err(Error::NumericIndividual {
                id: ind.id.clone(),
                msg: "longitudinal log-density is not finite".into(),
            })
        }
    }

    /// Longitudinal log-density with a precomputed correlation factor.
    /// Returns `-inf` when the mean function rejects `alpha`/`x`.
    pub fn longit_loglik_with_factor(
        &self,
        ind: &Individual,
        alpha: &[f64],
        x: &[f64],
        sigma2: f64,
        factor: &ErrorCovFactor,
    ) -> f64 {
        match self.residual_quad(ind, alpha, x, factor) {
            Some(quad) => factor.log_density_from_quad(quad, sigma2),
            None => f64::NEG_INFINITY,
        }
    }

    /// `(y_i - g)' Σ_i(ρ)⁻¹ (y_i - g)`, or `None` if `g` cannot be evaluated.
    pub fn residual_quad(&self, ind: &Individual, alpha: &[f64], x: &[f64], factor: &ErrorCovFactor) -> Option<f64> {
        with_scratch(ind.n_obs(), |r| {
            self.mean.eval_into(alpha, x, &ind.times, r).ok()?;
            for (ri, yi) in r.iter_mut().zip(&ind.y) {
                *ri = yi - *ri;
            }
            let q = factor.quad_form_in_place(r);
            q.is_finite().then_some(q)
        })
    }

    /// `log f(D_i | X_i; β, φ)`.
    pub fn glm_loglik(&self, ind: &Individual, state: &ParameterState, i: usize) -> Result<f64> {
        self.family.check_outcome(ind.outcome)?;
        self.check_beta_len(ind, state)?;
        let eta = state.linear_predictor(&ind.covariates, state.x_i(i));
        Ok(self.family.log_density(ind.outcome, eta, state.phi))
    }

    fn check_beta_len(&self, ind: &Individual, state: &ParameterState) -> Result<()> {
        let want = ind.covariates.len() + state.q();
        if state.beta.len() != want {
            return Err(Error::InvalidParameter(format!(
                "beta has {} entries but k + q = {want}",
                state.beta.len()
            )));
        }
        Ok(())
    }

    /// Sum of the prior log densities at `state`.
    pub fn log_prior(&self, state: &ParameterState, hyper: &Hyperparameters) -> Result<f64> {
        let mut lp = hyper.alpha_prior()?.log_density(state.alpha.as_slice());
        lp += hyper.beta_prior()?.log_density(state.beta.as_slice());
        lp += hyper.mu_prior()?.log_density(state.mu_x.as_slice());
        lp += inverse_wishart_log_density(&state.sigma_x, hyper.sigma_x_df, &hyper.sigma_x_iw_scale());
        lp += inverse_gamma_log_density(state.sigma2_eps, hyper.sigma_eps_shape, hyper.sigma_eps_rate);
        if self.error_model.has_rho() {
            lp += if state.rho >= hyper.rho_lower && state.rho < hyper.rho_upper {
                -(hyper.rho_upper - hyper.rho_lower).ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        if self.family.has_dispersion() {
            lp += inverse_gamma_log_density(state.phi, hyper.phi_shape, hyper.phi_rate);
        }
        Ok(lp)
    }

    /// Unnormalized joint log posterior: for each individual the longitudinal,
    /// GLM and random-effect log densities, plus every prior term.
    pub fn joint_unnorm_logpost(
        &self,
        data: &[Individual],
        state: &ParameterState,
        hyper: &Hyperparameters,
    ) -> Result<f64> {
        if state.m() != data.len() {
            return Err(Error::InvalidParameter(format!(
                "state has {} random-effect vectors for {} individuals",
                state.m(),
                data.len()
            )));
        }
        let re = RandomEffectDensity::new(&state.mu_x, &state.sigma_x)?;
        let mut total = self.log_prior(state, hyper)?;
        for (i, ind) in data.iter().enumerate() {
            total += self.longit_loglik(ind, state, i)?;
            total += self.glm_loglik(ind, state, i)?;
            total += re.log_density(state.x_i(i));
        }
        Ok(total)
    }
}

/// `N(X_i; μ_X, Σ_X)` with `Σ_X` factorized once.
#[derive(Debug, Clone)]
pub struct RandomEffectDensity {
    mean: Vec<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl RandomEffectDensity {
    pub fn new(mu: &nalgebra::DVector<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        let chol = cholesky(sigma)
            .ok_or_else(|| Error::Numeric("sigma_x is not positive definite".into()))?
            .l();
        let log_det = log_det_from_lower(&chol);
        Ok(Self {
            mean: mu.as_slice().to_vec(),
            chol,
            log_det,
        })
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        mvn_log_density_lower(x, &self.mean, &self.chol, self.log_det)
    }
}
