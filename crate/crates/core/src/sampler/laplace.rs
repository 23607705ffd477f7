use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dist::{normal_log_density, sample_truncated_normal, standard_normals};
use crate::error::{Error, Result};
use crate::linalg::{ridged_cholesky, symmetrize, Gaussian};

/// A log density known up to a constant, optionally with derivatives.
pub trait LogTarget {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Analytic gradient and Hessian, if available.
    fn derivatives(&self, _x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        None
    }

    /// First and second derivative of a one-dimensional target, if cheaper
    /// than `derivatives`.
    fn scalar_derivatives(&self, _x: f64) -> Option<(f64, f64)> {
        None
    }
}

/// Wraps a closure as a derivative-free target.
pub struct FnTarget<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64> LogTarget for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Tuning of the mode search and its fallbacks.
#[derive(Debug, Clone, Copy)]
pub struct LaplaceOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub max_ridge: f64,
    pub fallback_scale: f64,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iter: 100,
            max_halvings: 50,
            max_ridge: 1e3,
            fallback_scale: 0.1,
        }
    }
}

/// Proposal kernel for a Metropolis-Hastings block.
#[derive(Debug, Clone)]
pub enum Proposal {
    /// Independence proposal `N(mode, (-H)⁻¹)`.
    Laplace(Gaussian),
    /// Symmetric random walk with isotropic scale.
    RandomWalk { scale: f64 },
}

impl Proposal {
    pub fn is_fallback(&self) -> bool {
        matches!(self, Proposal::RandomWalk { .. })
    }
}

/// Result of a Laplace fit.
#[derive(Debug, Clone)]
pub struct LaplaceFit {
    pub mode: DVector<f64>,
    pub proposal: Proposal,
    /// Ridge added to `-H` to make it positive definite.
    pub ridge: f64,
    pub iterations: usize,
}

/// Central finite-difference gradient and Hessian.
pub fn numeric_derivatives<T: LogTarget + ?Sized>(target: &T, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.len();
    let f0 = target.log_density(x);
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let hg: Vec<f64> = x.iter().map(|v| 1e-5 * v.abs().max(1.0)).collect();
    let hh: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let eval = |xp: &mut Vec<f64>, moves: &[(usize, f64)]| {
        for &(i, d) in moves {
            xp[i] += d;
        }
        let v = target.log_density(xp);
        xp.copy_from_slice(x);
        v
    };
    for i in 0..n {
        grad[i] = (eval(&mut xp, &[(i, hg[i])]) - eval(&mut xp, &[(i, -hg[i])])) / (2.0 * hg[i]);
        let fp = eval(&mut xp, &[(i, hh[i])]);
        let fm = eval(&mut xp, &[(i, -hh[i])]);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hh[i] * hh[i]);
        for j in 0..i {
            let pp = eval(&mut xp, &[(i, hh[i]), (j, hh[j])]);
            let pm = eval(&mut xp, &[(i, hh[i]), (j, -hh[j])]);
            let mp = eval(&mut xp, &[(i, -hh[i]), (j, hh[j])]);
            let mm = eval(&mut xp, &[(i, -hh[i]), (j, -hh[j])]);
            let v = (pp - pm - mp + mm) / (4.0 * hh[i] * hh[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (grad, hess)
}

fn derivatives<T: LogTarget + ?Sized>(target: &T, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    target.derivatives(x).unwrap_or_else(|| numeric_derivatives(target, x))
}

/// Damped Newton search for the mode of `target` from `init`, returning the
/// Gaussian approximation `N(mode, (-H)⁻¹)` as a proposal.
///
/// `-H` is ridged when not positive definite; past `max_ridge` the proposal
/// degrades to a random walk. Fails only when the target is not finite at
/// `init` or every step-halved trial point is non-finite.
pub fn laplace_proposal<T: LogTarget + ?Sized>(target: &T, init: &[f64], opts: &LaplaceOptions) -> Result<LaplaceFit> {
    if init.len() == 1 {
        return laplace_scalar(target, init[0], opts);
    }
    let mut x = DVector::from_column_slice(init);
    let mut f = target.log_density(x.as_slice());
    if !f.is_finite() {
        return Err(Error::Numeric(format!("log target is {f} at the starting point")));
    }
    let mut iterations = 0;
    let (mut grad, mut hess) = derivatives(target, x.as_slice());
    while iterations < opts.max_iter {
        if !grad.iter().all(|g| g.is_finite()) || grad.amax() < opts.grad_tol {
            break;
        }
        iterations += 1;
        let neg_h = symmetrize(&(-&hess));
        let direction = match ridged_cholesky(&neg_h, opts.max_ridge) {
            Some((chol, _)) => chol.solve(&grad),
            None => &grad / grad.amax().max(1.0),
        };
        let mut step = 1.0;
        let mut moved = false;
        let mut any_finite = false;
        for _ in 0..=opts.max_halvings {
            let trial = &x + &direction * step;
            let ft = target.log_density(trial.as_slice());
            if ft.is_finite() {
                any_finite = true;
                if ft >= f {
                    moved = trial != x;
                    x = trial;
                    f = ft;
                    break;
                }
            }
            step *= 0.5;
        }
        if !any_finite {
            return Err(Error::Numeric(format!(
                "mode search: no finite point after {} step halvings",
                opts.max_halvings
            )));
        }
        if !moved {
            break;
        }
        (grad, hess) = derivatives(target, x.as_slice());
    }
    let neg_h = symmetrize(&(-&hess));
    let (proposal, ridge) = match ridged_cholesky(&neg_h, opts.max_ridge) {
        Some((chol, tau)) => {
            let cov = symmetrize(&chol.inverse());
            match Gaussian::new(x.clone(), &cov) {
                Ok(g) => (Proposal::Laplace(g), tau),
                Err(_) => (Proposal::RandomWalk { scale: opts.fallback_scale }, tau),
            }
        }
        None => (Proposal::RandomWalk { scale: opts.fallback_scale }, f64::INFINITY),
    };
    Ok(LaplaceFit {
        mode: x,
        proposal,
        ridge,
        iterations,
    })
}

fn scalar_derivs<T: LogTarget + ?Sized>(target: &T, x: f64) -> (f64, f64) {
    if let Some(d) = target.scalar_derivatives(x) {
        return d;
    }
    if let Some((g, h)) = target.derivatives(&[x]) {
        return (g[0], h[(0, 0)]);
    }
    let f = |v: f64| target.log_density(&[v]);
    let hg = 1e-5 * x.abs().max(1.0);
    let hh = 1e-4 * x.abs().max(1.0);
    let grad = (f(x + hg) - f(x - hg)) / (2.0 * hg);
    let hess = (f(x + hh) - 2.0 * f(x) + f(x - hh)) / (hh * hh);
    (grad, hess)
}

/// Smallest ridge `τ` (0, then doubling from 1e-6) making `c + τ > 0`.
fn scalar_ridge(c: f64, max_ridge: f64) -> Option<f64> {
    if !c.is_finite() {
        return None;
    }
    if c > 0.0 {
        return Some(0.0);
    }
    let mut tau = 1e-6;
    while tau <= max_ridge {
        if c + tau > 0.0 {
            return Some(tau);
        }
        tau *= 2.0;
    }
    None
}

/// `laplace_proposal` for one dimension, without matrix algebra.
fn laplace_scalar<T: LogTarget + ?Sized>(target: &T, init: f64, opts: &LaplaceOptions) -> Result<LaplaceFit> {
    let mut x = init;
    let mut f = target.log_density(&[x]);
    if !f.is_finite() {
        return Err(Error::Numeric(format!("log target is {f} at the starting point")));
    }
    let mut iterations = 0;
    let (mut grad, mut hess) = scalar_derivs(target, x);
    while iterations < opts.max_iter {
        if !grad.is_finite() || grad.abs() < opts.grad_tol {
            break;
        }
        iterations += 1;
        let direction = match scalar_ridge(-hess, opts.max_ridge) {
            Some(tau) => grad / (-hess + tau),
            None => grad / grad.abs().max(1.0),
        };
        let mut step = 1.0;
        let mut moved = false;
        let mut any_finite = false;
        for _ in 0..=opts.max_halvings {
            let trial = x + direction * step;
            let ft = target.log_density(&[trial]);
            if ft.is_finite() {
                any_finite = true;
                if ft >= f {
                    moved = trial != x;
                    x = trial;
                    f = ft;
                    break;
                }
            }
            step *= 0.5;
        }
        if !any_finite {
            return Err(Error::Numeric(format!(
                "mode search: no finite point after {} step halvings",
                opts.max_halvings
            )));
        }
        if !moved {
            break;
        }
        (grad, hess) = scalar_derivs(target, x);
    }
    let fallback = Proposal::RandomWalk {
        scale: opts.fallback_scale,
    };
    let (proposal, ridge) = match scalar_ridge(-hess, opts.max_ridge) {
        Some(tau) => {
            let sd = (-hess + tau).sqrt().recip();
            if sd.is_finite() && sd > 0.0 {
                let g = Gaussian::from_lower(DVector::from_element(1, x), DMatrix::from_element(1, 1, sd));
                (Proposal::Laplace(g), tau)
            } else {
                (fallback, tau)
            }
        }
        None => (fallback, f64::INFINITY),
    };
    Ok(LaplaceFit {
        mode: DVector::from_element(1, x),
        proposal,
        ridge,
        iterations,
    })
}

/// Outcome of one Metropolis-Hastings step.
#[derive(Debug, Clone)]
pub struct MhStep {
    pub value: Vec<f64>,
    pub log_density: f64,
    pub accepted: bool,
}

/// One Metropolis-Hastings step from `current` under `proposal`.
///
/// `bounds`, for one-dimensional targets, truncates a Laplace proposal to an
/// interval; the truncation constant cancels in the ratio. `current_lp` may
/// pass a cached value of `target.log_density(current)`.
pub fn mh_step<T: LogTarget + ?Sized, R: Rng + ?Sized>(
    current: &[f64],
    current_lp: Option<f64>,
    target: &T,
    proposal: &Proposal,
    bounds: Option<(f64, f64)>,
    rng: &mut R,
) -> Result<MhStep> {
    let lp_cur = current_lp.unwrap_or_else(|| target.log_density(current));
    if !lp_cur.is_finite() {
        return Err(Error::InvariantViolation(format!("log target is {lp_cur} at the current state")));
    }
    let (candidate, log_q_ratio) = match proposal {
        Proposal::Laplace(g) => {
            let cand: Vec<f64> = match bounds {
                Some((lo, hi)) if g.dim() == 1 => {
                    let sd = g.chol[(0, 0)];
                    vec![sample_truncated_normal(g.mean[0], sd, lo, hi, rng)?]
                }
                _ => g.transform(&standard_normals(g.dim(), rng)).as_slice().to_vec(),
            };
            let ratio = if g.dim() == 1 {
                let var = g.chol[(0, 0)] * g.chol[(0, 0)];
                normal_log_density(current[0], g.mean[0], var) - normal_log_density(cand[0], g.mean[0], var)
            } else {
                g.log_density(current) - g.log_density(&cand)
            };
            (cand, ratio)
        }
        Proposal::RandomWalk { scale } => {
            let z = standard_normals(current.len(), rng);
            (current.iter().zip(z).map(|(c, z)| c + scale * z).collect(), 0.0)
        }
    };
    let in_bounds = bounds.is_none_or(|(lo, hi)| candidate.iter().all(|v| (lo..=hi).contains(v)));
    let lp_cand = if in_bounds {
        target.log_density(&candidate)
    } else {
        f64::NEG_INFINITY
    };
    let log_accept = lp_cand - lp_cur + log_q_ratio;
    let u: f64 = rng.random();
    if lp_cand.is_finite() && u.ln() < log_accept {
        Ok(MhStep {
            value: candidate,
            log_density: lp_cand,
            accepted: true,
        })
    } else {
        Ok(MhStep {
            value: current.to_vec(),
            log_density: lp_cur,
            accepted: false,
        })
    }
}

/// Random-walk Metropolis step with increments `scale · L z`, `z` standard
/// normal; candidates outside `bounds` are rejected.
pub fn random_walk_step<T: LogTarget + ?Sized, R: Rng + ?Sized>(
    current: &[f64],
    current_lp: f64,
    target: &T,
    chol: &DMatrix<f64>,
    scale: f64,
    bounds: Option<(f64, f64)>,
    rng: &mut R,
) -> MhStep {
    let z = DVector::from_vec(standard_normals(current.len(), rng));
    let step = chol * z * scale;
    let candidate: Vec<f64> = current.iter().zip(step.iter()).map(|(c, d)| c + d).collect();
    let in_bounds = bounds.is_none_or(|(lo, hi)| candidate.iter().all(|v| (lo..=hi).contains(v)));
    let lp_cand = if in_bounds {
        target.log_density(&candidate)
    } else {
        f64::NEG_INFINITY
    };
    let u: f64 = rng.random();
    if lp_cand.is_finite() && u.ln() < lp_cand - current_lp {
        MhStep {
            value: candidate,
            log_density: lp_cand,
            accepted: true,
        }
    } else {
        MhStep {
            value: current.to_vec(),
            log_density: current_lp,
            accepted: false,
        }
    }
}

/// Independence Metropolis-Hastings step without bounds or caching.
pub fn mh_independence_step<T: LogTarget + ?Sized, R: Rng + ?Sized>(
    current: &[f64],
    target: &T,
    proposal: &Proposal,
    rng: &mut R,
) -> Result<(Vec<f64>, bool)> {
    let step = mh_step(current, None, target, proposal, None, rng)?;
    Ok((step.value, step.accepted))
}
