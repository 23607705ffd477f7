use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, Gaussian, LN_2PI};
use crate::model::{car1_quad_log_det, car1_rho_derivatives, ErrorCovFactor, Family, Hyperparameters, Individual, JointModel, ParameterState, RandomEffectDensity};
use crate::sampler::conjugate::{draw_mu_x, draw_phi, draw_sigma_eps, draw_sigma_x};
use crate::sampler::laplace::{laplace_proposal, mh_step, random_walk_step, LaplaceOptions, LogTarget, Proposal};
use crate::sampler::rng::stream_rng;
use crate::sampler::FitConfig;

/// Acceptance counts of one Metropolis-Hastings block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockTally {
    pub proposed: u64,
    pub accepted: u64,
    /// Proposals that fell back to a random walk.
    pub fallbacks: u64,
}

impl BlockTally {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool, fallback: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
        self.fallbacks += fallback as u64;
    }
}

/// Tallies for every Metropolis-Hastings block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tallies {
    pub x: BlockTally,
    pub alpha: BlockTally,
    pub beta: BlockTally,
    pub rho: BlockTally,
    pub alpha_rw: BlockTally,
    pub beta_rw: BlockTally,
    pub rho_rw: BlockTally,
}

impl Tallies {
    pub fn blocks(&self) -> [(&'static str, BlockTally); 7] {
        [
            ("x", self.x),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("rho", self.rho),
            ("alpha_rw", self.alpha_rw),
            ("beta_rw", self.beta_rw),
            ("rho_rw", self.rho_rw),
        ]
    }
}

/// Optimal-scaling factor `2.38/√d` for random-walk increments.
fn rw_scale(d: usize) -> f64 {
    2.38 / (d as f64).sqrt()
}

fn eta(w: &[f64], beta: &[f64], x: &[f64]) -> f64 {
    let k = w.len();
    w.iter().zip(&beta[..k]).map(|(a, b)| a * b).sum::<f64>() + x.iter().zip(&beta[k..]).map(|(a, b)| a * b).sum::<f64>()
}

/// Everything the random-effect conditional needs, shared across individuals.
struct XContext<'a> {
    model: &'a JointModel,
    alpha: &'a [f64],
    beta: &'a [f64],
    sigma2: f64,
    phi: f64,
    re: RandomEffectDensity,
    mu: &'a DVector<f64>,
    sigma_inv: DMatrix<f64>,
    likelihood: bool,
}

/// Longitudinal log-density of an affine mean `g = g₀ + Jx` written as a
/// quadratic in `x`, so the random-effect conditional costs O(q²) per
/// evaluation.
struct LinearQuad {
    /// `J'Σ⁻¹J`
    jtj: DMatrix<f64>,
    /// `J'Σ⁻¹(y - g₀)`
    jtr: DVector<f64>,
    /// `(y - g₀)'Σ⁻¹(y - g₀)`
    rtr: f64,
    /// `n log(2πσ²) + log|Σ|`
    norm: f64,
}

impl LinearQuad {
    fn new(c: &XContext, ind: &Individual, factor: &ErrorCovFactor, x: &[f64]) -> Option<Self> {
        let (n, q) = (ind.n_obs(), x.len());
        let mut jac = c.model.mean.jacobian_x(c.alpha, x, &ind.times).ok()?;
        let mut r0 = c.model.mean.eval(c.alpha, &vec![0.0; q], &ind.times).ok()?;
        for (r, y) in r0.iter_mut().zip(&ind.y) {
            *r = y - *r;
        }
        factor.whiten(&mut r0);
        for j in 0..q {
            factor.whiten(&mut jac.as_mut_slice()[j * n..(j + 1) * n]);
        }
        let r0 = DVector::from_vec(r0);
        Some(Self {
            jtj: jac.transpose() * &jac,
            jtr: jac.transpose() * &r0,
            rtr: r0.norm_squared(),
            norm: n as f64 * (LN_2PI + c.sigma2.ln()) + factor.log_det(),
        })
    }

    fn log_density(&self, x: &[f64], sigma2: f64) -> f64 {
        let q = x.len();
        let mut quad = self.rtr;
        for a in 0..q {
            quad -= 2.0 * self.jtr[a] * x[a];
            for b in 0..q {
                quad += x[a] * self.jtj[(a, b)] * x[b];
            }
        }
        -0.5 * (self.norm + quad / sigma2)
    }
}

struct XTarget<'a> {
    ctx: &'a XContext<'a>,
    ind: &'a Individual,
    factor: &'a ErrorCovFactor,
    quad: Option<LinearQuad>,
}

impl LogTarget for XTarget<'_> {
    fn dim(&self) -> usize {
        self.ctx.mu.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let c = self.ctx;
        let mut lp = c.re.log_density(x);
        if c.likelihood {
            lp += match &self.quad {
                Some(q) => q.log_density(x, c.sigma2),
                None => c.model.longit_loglik_with_factor(self.ind, c.alpha, x, c.sigma2, self.factor),
            };
            let e = eta(&self.ind.covariates, c.beta, x);
            lp += c.model.family.log_density(self.ind.outcome, e, c.phi);
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    fn derivatives(&self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let c = self.ctx;
        let q = x.len();
        let xv = DVector::from_column_slice(x);
        let mut grad = -(&c.sigma_inv * (&xv - c.mu));
        let mut hess = -c.sigma_inv.clone();
        if !c.likelihood {
            return Some((grad, hess));
        }
        let lq = self.quad.as_ref()?;
        grad += (&lq.jtr - &lq.jtj * &xv) / c.sigma2;
        hess -= &lq.jtj / c.sigma2;
        let k = self.ind.covariates.len();
        let b1 = &c.beta[k..];
        let e = eta(&self.ind.covariates, c.beta, x);
        let fam = c.model.family;
        let resid = (self.ind.outcome - fam.mean(e)) / c.phi;
        let curv = fam.variance(e) / c.phi;
        for a in 0..q {
            grad[a] += b1[a] * resid;
            for b in 0..q {
                hess[(a, b)] -= b1[a] * b1[b] * curv;
            }
        }
        Some((grad, hess))
    }

    fn scalar_derivatives(&self, x: f64) -> Option<(f64, f64)> {
        let c = self.ctx;
        let sinv = c.sigma_inv[(0, 0)];
        let mut grad = -sinv * (x - c.mu[0]);
        let mut hess = -sinv;
        if !c.likelihood {
            return Some((grad, hess));
        }
        let lq = self.quad.as_ref()?;
        grad += (lq.jtr[0] - lq.jtj[(0, 0)] * x) / c.sigma2;
        hess -= lq.jtj[(0, 0)] / c.sigma2;
        let b1 = c.beta[self.ind.covariates.len()];
        let e = eta(&self.ind.covariates, c.beta, &[x]);
        let fam = c.model.family;
        grad += b1 * (self.ind.outcome - fam.mean(e)) / c.phi;
        hess -= b1 * b1 * fam.variance(e) / c.phi;
        Some((grad, hess))
    }
}

struct AlphaTarget<'a> {
    model: &'a JointModel,
    data: &'a [Individual],
    x: &'a ParameterState,
    factors: &'a [ErrorCovFactor],
    prior: &'a Gaussian,
    prior_prec: &'a DMatrix<f64>,
    free: &'a [usize],
    likelihood: bool,
}

impl LogTarget for AlphaTarget<'_> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn log_density(&self, sub: &[f64]) -> f64 {
        let alpha = self.full_alpha(sub);
        let mut lp = self.prior.log_density(&alpha);
        if self.likelihood {
            for (i, (ind, f)) in self.data.iter().zip(self.factors).enumerate() {
                lp += self.model.longit_loglik_with_factor(ind, &alpha, self.x.x_i(i), self.x.sigma2_eps, f);
                if lp == f64::NEG_INFINITY {
                    break;
                }
            }
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    /// Exact gradient and Hessian when the mean function supplies its
    /// α-derivatives: with `w = Σ⁻¹r/σ²`, the gradient is `J'w` and the
    /// Hessian `-J'Σ⁻¹J/σ² + Σ_k w_k ∇²g_k`.
    fn derivatives(&self, sub: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let alpha = self.full_alpha(sub);
        let p = alpha.len();
        let centered = DVector::from_iterator(p, alpha.iter().zip(self.prior.mean.iter()).map(|(a, m)| a - m));
        let mut grad = -(self.prior_prec * centered);
        let mut hess = -self.prior_prec.clone();
        if self.likelihood {
            let s2 = self.x.sigma2_eps;
            let (mut jac, mut second, mut r) = (Vec::new(), Vec::new(), Vec::new());
            for (i, (ind, f)) in self.data.iter().zip(self.factors).enumerate() {
                let n = ind.n_obs();
                let x = self.x.x_i(i);
                jac.resize(n * p, 0.0);
                second.resize(n * p * p, 0.0);
                r.resize(n, 0.0);
                if !self.model.mean.alpha_derivatives_into(&alpha, x, &ind.times, &mut jac, &mut second) {
                    return None;
                }
                self.model.mean.eval_into(&alpha, x, &ind.times, &mut r).ok()?;
                for (ri, yi) in r.iter_mut().zip(&ind.y) {
                    *ri = yi - *ri;
                }
                let w = f.solve(&r);
                for a in 0..p {
                    grad[a] += (0..n).map(|k| jac[a * n + k] * w[k]).sum::<f64>() / s2;
                    for b in 0..p {
                        hess[(a, b)] += (0..n).map(|k| second[(a * p + b) * n + k] * w[k]).sum::<f64>() / s2;
                    }
                }
                for col in jac.chunks_mut(n) {
                    f.whiten(col);
                }
                for a in 0..p {
                    for b in 0..=a {
                        let v = (0..n).map(|k| jac[a * n + k] * jac[b * n + k]).sum::<f64>() / s2;
                        hess[(a, b)] -= v;
                        if a != b {
                            hess[(b, a)] -= v;
                        }
                    }
                }
            }
        }
        let g = DVector::from_iterator(self.free.len(), self.free.iter().map(|&a| grad[a]));
        let h = DMatrix::from_fn(self.free.len(), self.free.len(), |a, b| hess[(self.free[a], self.free[b])]);
        (g.iter().all(|v| v.is_finite()) && h.iter().all(|v| v.is_finite())).then_some((g, h))
    }
}

impl AlphaTarget<'_> {
    fn full_alpha(&self, sub: &[f64]) -> Vec<f64> {
        let mut alpha = self.x.alpha.as_slice().to_vec();
        for (&j, &v) in self.free.iter().zip(sub) {
            alpha[j] = v;
        }
        alpha
    }
}

struct BetaTarget<'a> {
    family: Family,
    data: &'a [Individual],
    state: &'a ParameterState,
    prior: &'a Gaussian,
    prior_prec: &'a DMatrix<f64>,
    likelihood: bool,
}

impl BetaTarget<'_> {
    fn z(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.data[i].covariates.iter().chain(self.state.x_i(i)).copied()
    }
}

impl LogTarget for BetaTarget<'_> {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn log_density(&self, beta: &[f64]) -> f64 {
        let mut lp = self.prior.log_density(beta);
        if self.likelihood {
            for (i, ind) in self.data.iter().enumerate() {
                let e = eta(&ind.covariates, beta, self.state.x_i(i));
                lp += self.family.log_density(ind.outcome, e, self.state.phi);
            }
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    fn derivatives(&self, beta: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let r = beta.len();
        let b = DVector::from_column_slice(beta);
        let mut grad = -(self.prior_prec * (&b - &self.prior.mean));
        let mut hess = -self.prior_prec.clone();
        if self.likelihood {
            let phi = self.state.phi;
            for (i, ind) in self.data.iter().enumerate() {
                let z: Vec<f64> = self.z(i).collect();
                let e: f64 = z.iter().zip(beta).map(|(a, c)| a * c).sum();
                let resid = (ind.outcome - self.family.mean(e)) / phi;
                let curv = self.family.variance(e) / phi;
                for a in 0..r {
                    grad[a] += z[a] * resid;
                    for c in 0..r {
                        hess[(a, c)] -= z[a] * z[c] * curv;
                    }
                }
            }
        }
        Some((grad, hess))
    }
}

struct RhoTarget<'a> {
    data: &'a [Individual],
    /// `y_i - g(α, X_i)`, which does not depend on ρ; `None` if `g` failed.
    resid: Option<Vec<Vec<f64>>>,
    sigma2: f64,
    lower: f64,
    upper: f64,
    likelihood: bool,
}

impl<'a> RhoTarget<'a> {
    fn new(model: &JointModel, data: &'a [Individual], state: &ParameterState, bounds: (f64, f64), likelihood: bool) -> Self {
        let resid = likelihood
            .then(|| {
                data.iter()
                    .enumerate()
                    .map(|(i, ind)| {
                        let mut r = model.mean.eval(state.alpha.as_slice(), state.x_i(i), &ind.times).ok()?;
                        for (ri, yi) in r.iter_mut().zip(&ind.y) {
                            *ri = yi - *ri;
                        }
                        Some(r)
                    })
                    .collect::<Option<Vec<_>>>()
            })
            .flatten();
        Self {
            data,
            resid,
            sigma2: state.sigma2_eps,
            lower: bounds.0,
            upper: bounds.1,
            likelihood,
        }
    }
}

impl LogTarget for RhoTarget<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, rho: &[f64]) -> f64 {
        let rho = rho[0];
        if !(rho >= self.lower && rho <= self.upper) {
            return f64::NEG_INFINITY;
        }
        if !self.likelihood {
            return 0.0;
        }
        let Some(resid) = &self.resid else {
            return f64::NEG_INFINITY;
        };
        let ln_s2 = self.sigma2.ln();
        let mut lp = 0.0;
        for (ind, r) in self.data.iter().zip(resid) {
            let Ok((quad, log_det)) = car1_quad_log_det(rho, &ind.times, r) else {
                return f64::NEG_INFINITY;
            };
            lp -= 0.5 * (r.len() as f64 * (LN_2PI + ln_s2) + log_det + quad / self.sigma2);
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    fn scalar_derivatives(&self, rho: f64) -> Option<(f64, f64)> {
        if !(rho > self.lower && rho < self.upper) {
            return None;
        }
        if !self.likelihood {
            return Some((0.0, 0.0));
        }
        let resid = self.resid.as_ref()?;
        let (mut g, mut h) = (0.0, 0.0);
        for (ind, r) in self.data.iter().zip(resid) {
            let (dg, dh) = car1_rho_derivatives(rho, &ind.times, r, self.sigma2)?;
            g += dg;
            h += dh;
        }
        Some((g, h))
    }
}

/// Metropolis-within-Gibbs sampler over the joint posterior.
///
/// One sweep updates, in order: every `X_i`, α, β, `μ_X`, `Σ_X`, `σ²_ε`,
/// ρ (CAR(1) only) and φ (Gaussian outcomes only). Individual `i` draws
/// from its own random stream, so serial and parallel sweeps agree exactly.
pub struct GibbsSampler<'a> {
    model: JointModel,
    data: &'a [Individual],
    hyper: Hyperparameters,
    alpha_prior: Gaussian,
    alpha_prec: DMatrix<f64>,
    beta_prior: Gaussian,
    beta_prec: DMatrix<f64>,
    alpha_free: Vec<usize>,
    x_fixed: Vec<bool>,
    config: FitConfig,
    opts: LaplaceOptions,
    factors: Vec<ErrorCovFactor>,
    factors_rho: f64,
    rng: ChaCha8Rng,
    x_rngs: Vec<ChaCha8Rng>,
    alpha_prop: Option<Proposal>,
    beta_prop: Option<Proposal>,
    rho_prop: Option<Proposal>,
    sweeps: usize,
    n_obs: usize,
    tallies: Tallies,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(
        model: JointModel,
        data: &'a [Individual],
        hyper: Hyperparameters,
        config: &FitConfig,
        state: &ParameterState,
    ) -> Result<Self> {
        config.validate()?;
        hyper.validate()?;
        if state.m() != data.len() {
            return Err(Error::InvalidParameter(format!(
                "state has {} random-effect vectors for {} individuals",
                state.m(),
                data.len()
            )));
        }
        let p = state.alpha.len();
        let alpha_free = (0..p).filter(|j| !config.fixed.alpha.contains(j)).collect();
        let mut x_fixed = vec![false; data.len()];
        for &i in &config.fixed.x {
            if i < x_fixed.len() {
                x_fixed[i] = true;
            }
        }
        let rho = model.effective_rho(state);
        let factors = data
            .iter()
            .map(|ind| ErrorCovFactor::for_individual(rho, ind))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            alpha_prior: hyper.alpha_prior()?,
            alpha_prec: spd_inverse(&hyper.alpha_cov, "A")?,
            beta_prior: hyper.beta_prior()?,
            beta_prec: spd_inverse(&hyper.beta_cov, "S")?,
            alpha_free,
            x_fixed,
            config: config.clone(),
            opts: LaplaceOptions::default(),
            factors,
            factors_rho: rho,
            rng: stream_rng(config.seed, 0),
            x_rngs: (0..data.len()).map(|i| stream_rng(config.seed, i as u64 + 1)).collect(),
            alpha_prop: None,
            beta_prop: None,
            rho_prop: None,
            sweeps: 0,
            n_obs: data.iter().map(Individual::n_obs).sum(),
            tallies: Tallies::default(),
            model,
            data,
            hyper,
        })
    }

    pub fn tallies(&self) -> Tallies {
        self.tallies
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    fn sync_factors(&mut self, state: &ParameterState) -> Result<()> {
        let rho = self.model.effective_rho(state);
        if rho != self.factors_rho {
            self.factors = self
                .data
                .iter()
                .map(|ind| ErrorCovFactor::for_individual(rho, ind))
                .collect::<Result<Vec<_>>>()?;
            self.factors_rho = rho;
        }
        Ok(())
    }

    fn refresh_due(&self, prop: &Option<Proposal>) -> bool {
        prop.is_none() || (self.sweeps - 1) % self.config.refresh_every == 0
    }

    /// Advances `state` by one full sweep.
    pub fn sweep(&mut self, state: &mut ParameterState) -> Result<()> {
        self.sweeps += 1;
        self.sync_factors(state)?;
        let fixed = self.config.fixed.clone();
        self.update_x(state).map_err(|e| e.in_block("x"))?;
        if !self.alpha_free.is_empty() {
            self.update_alpha(state).map_err(|e| e.in_block("alpha"))?;
        }
        if !fixed.beta {
            self.update_beta(state).map_err(|e| e.in_block("beta"))?;
        }
        if !fixed.mu_x {
            state.mu_x = draw_mu_x(&state.x, &state.sigma_x, &self.hyper, &mut self.rng).map_err(|e| e.in_block("mu_x"))?;
        }
        if !fixed.sigma_x {
            state.sigma_x =
                draw_sigma_x(&state.x, &state.mu_x, &self.hyper, &mut self.rng).map_err(|e| e.in_block("sigma_x"))?;
        }
        if !fixed.sigma2_eps {
            self.update_sigma_eps(state).map_err(|e| e.in_block("sigma2_eps"))?;
        }
        if self.model.error_model.has_rho() && !fixed.rho {
            self.update_rho(state).map_err(|e| e.in_block("rho"))?;
        }
        if self.model.family.has_dispersion() && !fixed.phi {
            self.update_phi(state).map_err(|e| e.in_block("phi"))?;
        }
        state.validate().map_err(|e| Error::InvariantViolation(e.to_string()))
    }

    fn update_x(&mut self, state: &mut ParameterState) -> Result<()> {
        if self.x_fixed.iter().all(|&f| f) {
            return Ok(());
        }
        let ctx = XContext {
            model: &self.model,
            alpha: state.alpha.as_slice(),
            beta: state.beta.as_slice(),
            sigma2: state.sigma2_eps,
            phi: state.phi,
            re: RandomEffectDensity::new(&state.mu_x, &state.sigma_x)?,
            mu: &state.mu_x,
            sigma_inv: spd_inverse(&state.sigma_x, "sigma_x")?,
            likelihood: self.config.likelihood,
        };
        let data = self.data;
        let factors = &self.factors;
        let x_fixed = &self.x_fixed;
        let opts = &self.opts;
        let st: &ParameterState = state;
        let one = |(i, rng): (usize, &mut ChaCha8Rng)| -> Result<Option<(Vec<f64>, bool, bool)>> {
            if x_fixed[i] {
                return Ok(None);
            }
            let current = st.x_i(i);
            let quad = if ctx.likelihood && ctx.model.mean.linear_in_random_effects() {
                LinearQuad::new(&ctx, &data[i], &factors[i], current)
            } else {
                None
            };
            let target = XTarget {
                ctx: &ctx,
                ind: &data[i],
                factor: &factors[i],
                quad,
            };
            let lp = target.log_density(current);
            if !lp.is_finite() {
                return Err(Error::NumericIndividual {
                    id: data[i].id.clone(),
                    msg: format!("random-effect conditional is {lp} at the current value"),
                });
            }
            let proposal = laplace_proposal(&target, current, opts)
                .map(|f| f.proposal)
                .unwrap_or(Proposal::RandomWalk {
                    scale: opts.fallback_scale,
                });
            let step = mh_step(current, Some(lp), &target, &proposal, None, rng).map_err(|e| {
                Error::NumericIndividual {
                    id: data[i].id.clone(),
                    msg: e.to_string(),
                }
            })?;
            Ok(Some((step.value, step.accepted, proposal.is_fallback())))
        };
        let results: Vec<_> = if self.config.parallel {
            self.x_rngs.par_iter_mut().enumerate().map(one).collect::<Result<_>>()?
        } else {
            self.x_rngs.iter_mut().enumerate().map(one).collect::<Result<_>>()?
        };
        drop(ctx);
        for (i, r) in results.into_iter().enumerate() {
            if let Some((value, accepted, fallback)) = r {
                state.x_i_mut(i).copy_from_slice(&value);
                self.tallies.x.record(accepted, fallback);
            }
        }
        Ok(())
    }

    fn update_alpha(&mut self, state: &mut ParameterState) -> Result<()> {
        let target = AlphaTarget {
            model: &self.model,
            data: self.data,
            x: state,
            factors: &self.factors,
            prior: &self.alpha_prior,
            prior_prec: &self.alpha_prec,
            free: &self.alpha_free,
            likelihood: self.config.likelihood,
        };
        let current: Vec<f64> = self.alpha_free.iter().map(|&j| state.alpha[j]).collect();
        if self.refresh_due(&self.alpha_prop) {
            self.alpha_prop = Some(fit_or_fallback(&target, &current, &self.opts));
        }
        let proposal = self.alpha_prop.as_ref().expect("proposal set above");
        let mut step = mh_step(&current, None, &target, proposal, None, &mut self.rng)?;
        self.tallies.alpha.record(step.accepted, proposal.is_fallback());
        if let (true, Proposal::Laplace(g)) = (self.config.supplementary_rw, proposal) {
            let d = current.len();
            step = random_walk_step(&step.value, step.log_density, &target, &g.chol, rw_scale(d), None, &mut self.rng);
            self.tallies.alpha_rw.record(step.accepted, false);
        }
        for (&j, v) in self.alpha_free.iter().zip(step.value) {
            state.alpha[j] = v;
        }
        Ok(())
    }

    fn update_beta(&mut self, state: &mut ParameterState) -> Result<()> {
        let target = BetaTarget {
            family: self.model.family,
            data: self.data,
            state,
            prior: &self.beta_prior,
            prior_prec: &self.beta_prec,
            likelihood: self.config.likelihood,
        };
        let current = state.beta.as_slice().to_vec();
        if self.refresh_due(&self.beta_prop) {
            self.beta_prop = Some(fit_or_fallback(&target, &current, &self.opts));
        }
        let proposal = self.beta_prop.as_ref().expect("proposal set above");
        let mut step = mh_step(&current, None, &target, proposal, None, &mut self.rng)?;
        self.tallies.beta.record(step.accepted, proposal.is_fallback());
        if let (true, Proposal::Laplace(g)) = (self.config.supplementary_rw, proposal) {
            let d = current.len();
            step = random_walk_step(&step.value, step.log_density, &target, &g.chol, rw_scale(d), None, &mut self.rng);
            self.tallies.beta_rw.record(step.accepted, false);
        }
        state.beta = DVector::from_vec(step.value);
        Ok(())
    }

    fn update_sigma_eps(&mut self, state: &mut ParameterState) -> Result<()> {
        let (n, rss) = if self.config.likelihood {
            let mut rss = 0.0;
            for (i, (ind, f)) in self.data.iter().zip(&self.factors).enumerate() {
                rss += self
                    .model
                    .residual_quad(ind, state.alpha.as_slice(), state.x_i(i), f)
                    .ok_or_else(|| Error::NumericIndividual {
                        id: ind.id.clone(),
                        msg: "residual quadratic form is not finite".into(),
                    })?;
            }
            (self.n_obs, rss)
        } else {
            (0, 0.0)
        };
        state.sigma2_eps = draw_sigma_eps(n, rss, &self.hyper, &mut self.rng)?;
        Ok(())
    }

    fn update_rho(&mut self, state: &mut ParameterState) -> Result<()> {
        let (lower, upper) = (self.hyper.rho_lower, self.hyper.rho_max());
        let target = RhoTarget::new(&self.model, self.data, state, (lower, upper), self.config.likelihood);
        let current = [state.rho];
        if self.refresh_due(&self.rho_prop) {
            self.rho_prop = Some(fit_or_fallback(&target, &[0.5 * (lower + upper)], &self.opts));
        }
        let proposal = self.rho_prop.as_ref().expect("proposal set above");
        let mut step = mh_step(&current, None, &target, proposal, Some((lower, upper)), &mut self.rng)?;
        self.tallies.rho.record(step.accepted, proposal.is_fallback());
        if let (true, Proposal::Laplace(g)) = (self.config.supplementary_rw, proposal) {
            let first = step.accepted;
            step = random_walk_step(&step.value, step.log_density, &target, &g.chol, rw_scale(1), Some((lower, upper)), &mut self.rng);
            self.tallies.rho_rw.record(step.accepted, false);
            step.accepted |= first;
        }
        if step.accepted {
            state.rho = step.value[0];
            self.sync_factors(state)?;
        }
        Ok(())
    }

    fn update_phi(&mut self, state: &mut ParameterState) -> Result<()> {
        let (m, ss) = if self.config.likelihood {
            let ss = self
                .data
                .iter()
                .enumerate()
                .map(|(i, ind)| (ind.outcome - state.linear_predictor(&ind.covariates, state.x_i(i))).powi(2))
                .sum();
            (self.data.len(), ss)
        } else {
            (0, 0.0)
        };
        state.phi = draw_phi(m, ss, &self.hyper, &mut self.rng)?;
        Ok(())
    }
}

fn fit_or_fallback<T: LogTarget + ?Sized>(target: &T, current: &[f64], opts: &LaplaceOptions) -> Proposal {
    laplace_proposal(target, current, opts)
        .map(|f| f.proposal)
        .unwrap_or(Proposal::RandomWalk {
            scale: opts.fallback_scale,
        })
}

/// One sweep with a freshly built sampler; convenient for tests and for
/// single-step use. Long runs should reuse a [`GibbsSampler`].
pub fn gibbs_sweep(
    model: &JointModel,
    data: &[Individual],
    hyper: &Hyperparameters,
    config: &FitConfig,
    state: &ParameterState,
) -> Result<ParameterState> {
    let mut sampler = GibbsSampler::new(model.clone(), data, hyper.clone(), config, state)?;
    let mut next = state.clone();
    sampler.sweep(&mut next)?;
    Ok(next)
}
