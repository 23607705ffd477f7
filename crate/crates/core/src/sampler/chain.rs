use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ErrorModel, Family, Hyperparameters, Individual, JointModel, ParameterState};
use crate::sampler::{FitConfig, GibbsSampler, Schedule, Tallies};

/// Run information stored next to the draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMeta {
    pub seed: u64,
    pub schedule: Schedule,
    pub family: Family,
    pub error_model: ErrorModel,
    /// Individual ids, in random-effect column order.
    pub ids: Vec<String>,
    pub tallies: Tallies,
    /// Not persisted, so saved chains are byte-for-byte reproducible.
    pub wall_clock_secs: f64,
}

/// Retained draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStore {
    pub draws: Vec<ParameterState>,
    /// Sweep number (1-based) of each retained draw.
    pub iterations: Vec<usize>,
    pub meta: ChainMeta,
}

/// A named scalar trace extracted from a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarChain {
    pub name: String,
    pub values: Vec<f64>,
}

/// Column names and extractors for the scalar parameters of a state,
/// 1-based as in `alpha[1]` and `sigma_x[1_2]` (upper triangle only).
pub fn parameter_names(p: usize, q: usize, r: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(p + r + q + q * (q + 1) / 2 + 3);
    names.extend((1..=p).map(|j| format!("alpha[{j}]")));
    names.extend((1..=r).map(|j| format!("beta[{j}]")));
    names.extend((1..=q).map(|j| format!("mu_x[{j}]")));
    for a in 1..=q {
        names.extend((a..=q).map(|b| format!("sigma_x[{a}_{b}]")));
    }
    names.extend(["sigma2_eps", "rho", "phi"].map(String::from));
    names
}

/// Scalar parameters in [`parameter_names`] order.
pub fn parameter_values(s: &ParameterState) -> Vec<f64> {
    let q = s.q();
    let mut v: Vec<f64> = s.alpha.iter().chain(s.beta.iter()).chain(s.mu_x.iter()).copied().collect();
    for a in 0..q {
        v.extend((a..q).map(|b| s.sigma_x[(a, b)]));
    }
    v.extend([s.sigma2_eps, s.rho, s.phi]);
    v
}

/// Rebuilds a state from [`parameter_values`] output and the random effects.
pub fn state_from_values(values: &[f64], p: usize, q: usize, r: usize, x: DMatrix<f64>) -> Result<ParameterState> {
    let want = p + r + q + q * (q + 1) / 2 + 3;
    if values.len() != want {
        return Err(Error::InvalidParameter(format!("expected {want} parameter values, got {}", values.len())));
    }
    let mut it = values.iter().copied();
    let mut take = |n: usize| DVector::from_iterator(n, it.by_ref().take(n));
    let alpha = take(p);
    let beta = take(r);
    let mu_x = take(q);
    let tri = take(q * (q + 1) / 2);
    let tail = take(3);
    let mut sigma_x = DMatrix::zeros(q, q);
    let mut k = 0;
    for a in 0..q {
        for b in a..q {
            sigma_x[(a, b)] = tri[k];
            sigma_x[(b, a)] = tri[k];
            k += 1;
        }
    }
    Ok(ParameterState {
        alpha,
        beta,
        mu_x,
        sigma_x,
        sigma2_eps: tail[0],
        rho: tail[1],
        phi: tail[2],
        x,
    })
}

impl ChainStore {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// `(p, q, r)` of the stored states.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.draws
            .first()
            .map(|s| (s.alpha.len(), s.q(), s.beta.len()))
            .unwrap_or((0, 0, 0))
    }

    /// Traces of every free scalar parameter; ρ is omitted under independent
    /// errors and φ unless the outcome is Gaussian.
    pub fn scalar_chains(&self) -> Vec<ScalarChain> {
        let (p, q, r) = self.dims();
        let names = parameter_names(p, q, r);
        let rows: Vec<Vec<f64>> = self.draws.iter().map(parameter_values).collect();
        names
            .into_iter()
            .enumerate()
            .filter(|(_, n)| {
                (n != "rho" || self.meta.error_model.has_rho()) && (n != "phi" || self.meta.family.has_dispersion())
            })
            .map(|(j, name)| ScalarChain {
                name,
                values: rows.iter().map(|r| r[j]).collect(),
            })
            .collect()
    }

    /// Trace of one named scalar parameter.
    pub fn scalar(&self, name: &str) -> Option<Vec<f64>> {
        self.scalar_chains().into_iter().find(|c| c.name == name).map(|c| c.values)
    }
}

fn sample_variance(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (var > 0.0 && var.is_finite()).then_some(var)
}

/// Heuristic starting state: mean-function starting values where known,
/// moments of those for `μ_X` and `Σ_X`, the pooled sample variance of `y`
/// for `σ²_ε`, `β = 0`, `ρ = 0.5` (0 under independent errors) and `φ = 1`.
pub fn initial_state(model: &JointModel, data: &[Individual], hyper: &Hyperparameters) -> Result<ParameterState> {
    let (p, q) = (model.mean.n_fixed(), model.mean.n_random());
    let (alpha, xs) = model
        .mean
        .initial_values(data)
        .unwrap_or_else(|| (hyper.alpha_mean.as_slice().to_vec(), vec![hyper.mu_mean.as_slice().to_vec(); data.len()]));
    if alpha.len() != p || xs.len() != data.len() || xs.iter().any(|x| x.len() != q) {
        return Err(Error::Initialization("mean function returned starting values of the wrong size".into()));
    }
    let m = data.len();
    let x = DMatrix::from_iterator(q, m, xs.iter().flatten().copied());
    let mu_x = if m == 0 {
        hyper.mu_mean.clone()
    } else {
        x.column_mean()
    };
    let sigma_x = DMatrix::from_diagonal(&DVector::from_iterator(
        q,
        (0..q).map(|j| sample_variance(&x.row(j).iter().copied().collect::<Vec<_>>()).unwrap_or(1.0)),
    ));
    let ys: Vec<f64> = data.iter().flat_map(|d| d.y.iter().copied()).collect();
    let outcomes: Vec<f64> = data.iter().map(|d| d.outcome).collect();
    let state = ParameterState {
        alpha: DVector::from_vec(alpha),
        beta: DVector::zeros(hyper.r()),
        mu_x,
        sigma_x,
        sigma2_eps: sample_variance(&ys).unwrap_or(1.0),
        rho: if model.error_model.has_rho() { 0.5 } else { 0.0 },
        phi: if model.family.has_dispersion() {
            sample_variance(&outcomes).unwrap_or(1.0)
        } else {
            1.0
        },
        x,
    };
    check_start(model, data, hyper, &state)?;
    Ok(state)
}

fn check_start(model: &JointModel, data: &[Individual], hyper: &Hyperparameters, state: &ParameterState) -> Result<()> {
    state.validate().map_err(|e| Error::Initialization(e.to_string()))?;
    let lp = model
        .joint_unnorm_logpost(data, state, hyper)
        .map_err(|e| Error::Initialization(e.to_string()))?;
    if !lp.is_finite() {
        return Err(Error::Initialization(format!("log posterior is {lp} at the starting state")));
    }
    Ok(())
}

/// Runs a chain of the logistic-growth model selected by `config`.
pub fn run_chain(data: &[Individual], config: &FitConfig) -> Result<ChainStore> {
    run_chain_with_model(&JointModel::new(config.family, config.error_model), data, config)
}

/// Runs a chain for an arbitrary model, retaining draws per the schedule.
pub fn run_chain_with_model(model: &JointModel, data: &[Individual], config: &FitConfig) -> Result<ChainStore> {
    config.validate()?;
    let k = data.first().map(|d| d.covariates.len()).unwrap_or(1);
    if data.iter().any(|d| d.covariates.len() != k) {
        return Err(Error::Data("individuals have differing numbers of covariates".into()));
    }
    for d in data {
        model.family.check_outcome(d.outcome).map_err(|e| Error::Data(format!("individual {}: {e}", d.id)))?;
    }
    let hyper = config
        .hyper
        .resolve(model.mean.n_fixed(), model.mean.n_random(), k + model.mean.n_random())?;
    let mut state = match &config.init {
        Some(s) => {
            check_start(model, data, &hyper, s)?;
            s.clone()
        }
        None => initial_state(model, data, &hyper)?,
    };
    let started = Instant::now();
    let mut sampler = GibbsSampler::new(model.clone(), data, hyper, config, &state)?;
    let schedule = config.schedule;
    let mut draws = Vec::with_capacity(schedule.retained());
    let mut iterations = Vec::with_capacity(schedule.retained());
    for it in 1..=schedule.iterations {
        sampler.sweep(&mut state).map_err(|e| Error::Iteration {
            iteration: it,
            source: Box::new(e),
        })?;
        if schedule.keeps(it) {
            draws.push(state.clone());
            iterations.push(it);
        }
    }
    Ok(ChainStore {
        draws,
        iterations,
        meta: ChainMeta {
            seed: config.seed,
            schedule,
            family: model.family,
            error_model: model.error_model,
            ids: data.iter().map(|d| d.id.clone()).collect(),
            tallies: sampler.tallies(),
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    })
}
