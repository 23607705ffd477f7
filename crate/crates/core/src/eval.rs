//! Model comparison by conditional predictive ordinates and evaluation of
//! outcome classification.

use rand::Rng;

use crate::dist::standard_normals;
use crate::error::{Error, Result};
use crate::linalg::Gaussian;
use crate::model::{logistic, ErrorCovFactor, Family, Individual, JointModel, ParameterState};
use crate::sampler::ChainStore;

/// Per-draw density inside the harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CpoKernel {
    /// `f(y_i | X_i, θ) f(D_i | X_i, θ)`, whose harmonic mean is a consistent
    /// estimate of `f(y_i, D_i | data₋ᵢ)`.
    #[default]
    Conditional,
    /// Additionally multiplies by `f(X_i | θ)`; the harmonic mean then has
    /// no finite expectation, and is kept only for comparison.
    WithRandomEffect,
}

fn check_ids(data: &[Individual], store: &ChainStore) -> Result<()> {
    let ids = &store.meta.ids;
    if ids.len() != data.len() || ids.iter().zip(data).any(|(a, d)| *a != d.id) {
        return Err(Error::Data("chain individuals do not match the data".into()));
    }
    Ok(())
}

fn draw_log_kernel(model: &JointModel, ind: &Individual, i: usize, s: &ParameterState, kernel: CpoKernel) -> Result<f64> {
    let factor = ErrorCovFactor::for_individual(model.effective_rho(s), ind)?;
    let x = s.x_i(i);
    let mut lp = model.longit_loglik_with_factor(ind, s.alpha.as_slice(), x, s.sigma2_eps, &factor);
    lp += model.glm_loglik(ind, s, i)?;
    if kernel == CpoKernel::WithRandomEffect {
        lp += crate::model::RandomEffectDensity::new(&s.mu_x, &s.sigma_x)?.log_density(x);
    }
    Ok(lp)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log CPO_i`: minus the log of the mean of inverse per-draw densities,
/// evaluated with log-sum-exp. Individual `i` indexes the chain's random
/// effects.
pub fn log_cpo_hat(model: &JointModel, ind: &Individual, i: usize, store: &ChainStore, kernel: CpoKernel) -> Result<f64> {
    if store.draws.is_empty() {
        return Err(Error::Domain("CPO needs at least one retained draw".into()));
    }
    let mut neg = Vec::with_capacity(store.draws.len());
    for (r, s) in store.draws.iter().enumerate() {
        let lp = draw_log_kernel(model, ind, i, s, kernel).map_err(|e| Error::Draw {
            draw: r,
            msg: e.to_string(),
        })?;
        if !lp.is_finite() {
            return Err(Error::Draw {
                draw: r,
                msg: format!("log density {lp} for individual {}", ind.id),
            });
        }
        neg.push(-lp);
    }
    Ok((store.draws.len() as f64).ln() - log_sum_exp(&neg))
}

pub fn cpo_hat(model: &JointModel, ind: &Individual, i: usize, store: &ChainStore) -> Result<f64> {
    log_cpo_hat(model, ind, i, store, CpoKernel::Conditional).map(f64::exp)
}

/// `(mean, sum)` of `log CPO_i`.
pub fn lpml(cpos: &[f64]) -> Result<(f64, f64)> {
    if let Some(c) = cpos.iter().find(|c| !(**c > 0.0)) {
        return Err(Error::Domain(format!("CPO values must be positive, got {c}")));
    }
    lpml_from_logs(&cpos.iter().map(|c| c.ln()).collect::<Vec<_>>())
}

fn lpml_from_logs(logs: &[f64]) -> Result<(f64, f64)> {
    if logs.is_empty() {
        return Err(Error::Domain("LPML of an empty set".into()));
    }
    let sum: f64 = logs.iter().sum();
    Ok((sum / logs.len() as f64, sum))
}

/// CPO of every individual with both LPML normalizations.
#[derive(Debug, Clone, PartialEq)]
pub struct CpoReport {
    pub log_cpo: Vec<f64>,
    pub lpml_mean: f64,
    pub lpml_sum: f64,
}

impl CpoReport {
    pub fn cpo(&self) -> Vec<f64> {
        self.log_cpo.iter().map(|l| l.exp()).collect()
    }
}

pub fn cpo_report(model: &JointModel, data: &[Individual], store: &ChainStore, kernel: CpoKernel) -> Result<CpoReport> {
    check_ids(data, store)?;
    let log_cpo = data
        .iter()
        .enumerate()
        .map(|(i, ind)| log_cpo_hat(model, ind, i, store, kernel))
        .collect::<Result<Vec<_>>>()?;
    let (lpml_mean, lpml_sum) = lpml_from_logs(&log_cpo)?;
    Ok(CpoReport {
        log_cpo,
        lpml_mean,
        lpml_sum,
    })
}

fn require_bernoulli(model: &JointModel) -> Result<()> {
    if model.family != Family::Bernoulli {
        return Err(Error::config("family", format!("outcome probabilities need a bernoulli model, not {}", model.family)));
    }
    Ok(())
}

/// Posterior mean of `P(D_i = 1 | X_i)` over the stored draws.
pub fn predict_outcome_prob(model: &JointModel, ind: &Individual, i: usize, store: &ChainStore) -> Result<f64> {
    require_bernoulli(model)?;
    if store.draws.is_empty() {
        return Err(Error::Domain("prediction needs at least one retained draw".into()));
    }
    let total: f64 = store
        .draws
        .iter()
        .map(|s| logistic(s.linear_predictor(&ind.covariates, s.x_i(i))))
        .sum();
    Ok(total / store.draws.len() as f64)
}

pub fn predict_all(model: &JointModel, data: &[Individual], store: &ChainStore) -> Result<Vec<f64>> {
    check_ids(data, store)?;
    data.iter().enumerate().map(|(i, ind)| predict_outcome_prob(model, ind, i, store)).collect()
}

/// Outcome probability for an individual absent from the fit: per draw,
/// `n_mc` random effects from `N(μ_X, Σ_X)` are weighted by the
/// longitudinal likelihood of the individual's measurements.
pub fn predict_new_outcome_prob<R: Rng + ?Sized>(
    model: &JointModel,
    ind: &Individual,
    store: &ChainStore,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64> {
    require_bernoulli(model)?;
    if store.draws.is_empty() || n_mc == 0 {
        return Err(Error::Domain("prediction needs draws and at least one Monte Carlo sample".into()));
    }
    let mut total = 0.0;
    for s in &store.draws {
        let re = Gaussian::new(s.mu_x.clone(), &s.sigma_x)?;
        let factor = ErrorCovFactor::for_individual(model.effective_rho(s), ind)?;
        let mut logw = Vec::with_capacity(n_mc);
        let mut probs = Vec::with_capacity(n_mc);
        for _ in 0..n_mc {
            let x = re.transform(&standard_normals(re.dim(), rng));
            logw.push(model.longit_loglik_with_factor(ind, s.alpha.as_slice(), x.as_slice(), s.sigma2_eps, &factor));
            probs.push(logistic(s.linear_predictor(&ind.covariates, x.as_slice())));
        }
        let norm = log_sum_exp(&logw);
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("no random effect supports the measurements of {}", ind.id)));
        }
        total += logw.iter().zip(&probs).map(|(w, p)| (w - norm).exp() * p).sum::<f64>();
    }
    Ok(total / store.draws.len() as f64)
}

/// Confusion counts with rows = actual, columns = predicted, both ordered
/// (normal, abnormal); "normal" is outcome 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub confusion: [[usize; 2]; 2],
    pub error_rate: f64,
    sensitivity: Option<f64>,
    specificity: Option<f64>,
    pub auc: Option<f64>,
    pub auc_sd: Option<f64>,
}

impl ClassificationReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// Fraction of actual normals predicted normal.
    pub fn sensitivity(&self) -> Result<f64> {
        self.sensitivity.ok_or_else(|| Error::UndefinedRate("sensitivity: no actual normals".into()))
    }

    /// Fraction of actual abnormals predicted abnormal.
    pub fn specificity(&self) -> Result<f64> {
        self.specificity.ok_or_else(|| Error::UndefinedRate("specificity: no actual abnormals".into()))
    }

    /// Report built directly from confusion counts.
    pub fn from_counts(confusion: [[usize; 2]; 2]) -> Result<Self> {
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::Domain("no individuals to classify".into()));
        }
        let [[nn, na], [an, aa]] = confusion;
        let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        Ok(Self {
            confusion,
            error_rate: (na + an) as f64 / total as f64,
            sensitivity: rate(nn, nn + na),
            specificity: rate(aa, an + aa),
            auc: None,
            auc_sd: None,
        })
    }
}

fn check_labels(probs: &[f64], labels: &[f64]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::Domain(format!("{} scores but {} labels", probs.len(), labels.len())));
    }
    if let Some(l) = labels.iter().find(|l| **l != 0.0 && **l != 1.0) {
        return Err(Error::Domain(format!("labels must be 0 or 1, got {l}")));
    }
    Ok(())
}

/// Predicted normal iff `prob >= cutoff`.
pub fn classify(probs: &[f64], labels: &[f64], cutoff: f64) -> Result<ClassificationReport> {
    check_labels(probs, labels)?;
    let mut confusion = [[0usize; 2]; 2];
    for (p, l) in probs.iter().zip(labels) {
        let actual = if *l == 1.0 { 0 } else { 1 };
        let predicted = if *p >= cutoff { 0 } else { 1 };
        confusion[actual][predicted] += 1;
    }
    ClassificationReport::from_counts(confusion)
}

/// AUC, its Hanley-McNeil standard deviation, and the ROC curve as
/// (false-positive rate, true-positive rate) points.
#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    pub auc: f64,
    pub auc_sd: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<Roc> {
    check_labels(scores, labels)?;
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == 1.0).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == 0.0).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Domain("ROC needs both outcome classes".into()));
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);

    // Mann-Whitney via sorted merge: each positive scores the negatives
    // below it plus half the ties.
    let mut neg_sorted = neg.clone();
    neg_sorted.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for p in &pos {
        let below = neg_sorted.partition_point(|n| n < p);
        let through = neg_sorted.partition_point(|n| n <= p);
        wins += below as f64 + 0.5 * (through - below) as f64;
    }
    let auc = wins / (np * nn);
    let q1 = auc / (2.0 - auc);
    let q2 = 2.0 * auc * auc / (1.0 + auc);
    let var = (auc * (1.0 - auc) + (np - 1.0) * (q1 - auc * auc) + (nn - 1.0) * (q2 - auc * auc)) / (np * nn);

    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = pos.iter().filter(|s| **s >= t).count() as f64;
        let fp = neg.iter().filter(|s| **s >= t).count() as f64;
        points.push((fp / nn, tp / np));
    }
    Ok(Roc {
        auc,
        auc_sd: var.max(0.0).sqrt(),
        points,
    })
}

/// In-sample classification with AUC.
pub fn evaluate(model: &JointModel, data: &[Individual], store: &ChainStore, cutoff: f64) -> Result<(ClassificationReport, Roc, Vec<f64>)> {
    let probs = predict_all(model, data, store)?;
    let labels: Vec<f64> = data.iter().map(|d| d.outcome).collect();
    let mut report = classify(&probs, &labels, cutoff)?;
    let roc = roc_auc(&probs, &labels)?;
    report.auc = Some(roc.auc);
    report.auc_sd = Some(roc.auc_sd);
    Ok((report, roc, probs))
}
