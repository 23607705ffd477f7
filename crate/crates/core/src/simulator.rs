//! Synthetic data on a sparse design and the replication harness that fits
//! correct and misspecified error models to each replicate.

use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::diagnostics::summarize;
use crate::error::{Error, Result};
use crate::eval::{cpo_report, evaluate, CpoKernel};
use crate::model::{logistic, ErrorCovFactor, Individual, JointModel, LogisticGrowth, MeanFunction};
use crate::sampler::{derive_seed, run_chain, stream_rng, FitConfig, ScalarChain};

/// The bundled 173-individual design.
pub const BUNDLED_DESIGN: &str = include_str!("../data/design_173.tsv");

/// Seed from which the bundled design was generated.
pub const BUNDLED_DESIGN_SEED: u64 = 173;

/// One row of a design: identifier, group and observation times.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub id: String,
    pub group: u8,
    pub times: Vec<f64>,
}

/// Parameter values used to simulate data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTruth {
    pub mu_x: f64,
    pub sigma2_x: f64,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub sigma2_eps: f64,
    pub rho: f64,
}

impl Default for SimTruth {
    fn default() -> Self {
        Self {
            mu_x: 4.0,
            sigma2_x: 0.2,
            alpha: [15.0, 7.0],
            beta: [-22.0, 5.0],
            sigma2_eps: 0.2,
            rho: 0.9,
        }
    }
}

impl SimTruth {
    /// `(name, value)` pairs in chain column naming.
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("beta[1]", self.beta[0]),
            ("beta[2]", self.beta[1]),
            ("mu_x[1]", self.mu_x),
            ("sigma_x[1_1]", self.sigma2_x),
            ("alpha[1]", self.alpha[0]),
            ("alpha[2]", self.alpha[1]),
            ("sigma2_eps", self.sigma2_eps),
            ("rho", self.rho),
        ]
    }

    fn validate(&self) -> Result<()> {
        let ok = self.sigma2_x >= 0.0
            && self.sigma2_eps >= 0.0
            && (0.0..1.0).contains(&self.rho)
            && self.alpha[1] != 0.0
            && [self.mu_x, self.alpha[0], self.alpha[1], self.beta[0], self.beta[1]]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("simulation truth {self:?} is out of support")))
        }
    }
}

/// Observation design plus the values to simulate from.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub rows: Vec<DesignRow>,
    pub truth: SimTruth,
    pub seed: u64,
}

impl SimDesign {
    pub fn bundled(seed: u64) -> Self {
        Self {
            rows: parse_design(BUNDLED_DESIGN).expect("bundled design parses"),
            truth: SimTruth::default(),
            seed,
        }
    }

    pub fn group_sizes(&self) -> [usize; 2] {
        let ones = self.rows.iter().filter(|r| r.group == 1).count();
        [self.rows.len() - ones, ones]
    }
}

/// Parses a design table: tab-separated `id`, `group`, comma-packed times,
/// with a header line.
pub fn parse_design(text: &str) -> Result<Vec<DesignRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |msg: String| Error::Format { line: line_no, msg };
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let group = match fields[1].trim() {
            "0" => 0,
            "1" => 1,
            g => return Err(bad(format!("group must be 0 or 1, got `{g}`"))),
        };
        let times = fields[2]
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| bad(format!("time `{t}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad("times must be strictly increasing".into()));
        }
        rows.push(DesignRow {
            id: fields[0].trim().to_string(),
            group,
            times,
        });
    }
    if rows.is_empty() {
        return Err(Error::Format {
            line: 1,
            msg: "design has no rows".into(),
        });
    }
    Ok(rows)
}

pub fn format_design(rows: &[DesignRow]) -> String {
    let mut out = String::from("id\tgroup\ttimes\n");
    for r in rows {
        let times: Vec<String> = r.times.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(out, "{}\t{}\t{}", r.id, r.group, times.join(","));
    }
    out
}

/// Generates a sparse design: 173 individuals, 124 in group 1, with
/// 52/54/57/7/2/1 individuals observed 1/2/3/4/5/6 times at distinct whole
/// days drawn uniformly from 1..=80.
pub fn generate_design(seed: u64) -> Vec<DesignRow> {
    let mut rng = stream_rng(seed, 0);
    let mut counts: Vec<usize> = [(1, 52), (2, 54), (3, 57), (4, 7), (5, 2), (6, 1)]
        .iter()
        .flat_map(|&(n, k)| std::iter::repeat_n(n, k))
        .collect();
    counts.shuffle(&mut rng);
    let mut groups: Vec<u8> = std::iter::repeat_n(1, 124).chain(std::iter::repeat_n(0, 49)).collect();
    groups.shuffle(&mut rng);
    counts
        .iter()
        .zip(groups)
        .enumerate()
        .map(|(i, (&n, group))| {
            let mut times: Vec<f64> = index::sample(&mut rng, 80, n).iter().map(|d| (d + 1) as f64).collect();
            times.sort_by(f64::total_cmp);
            DesignRow {
                id: format!("S{:03}", i + 1),
                group,
                times,
            }
        })
        .collect()
}

fn simulate_once(design: &SimDesign, seed: u64) -> Result<Vec<Individual>> {
    let t = &design.truth;
    let mut rng = stream_rng(seed, 0);
    design
        .rows
        .iter()
        .map(|row| {
            let z: f64 = rng.sample(StandardNormal);
            let x = t.mu_x + t.sigma2_x.sqrt() * z;
            let mut y = LogisticGrowth.eval(&t.alpha, &[x], &row.times)?;
            let factor = ErrorCovFactor::new(t.rho, &row.times)?;
            let l = factor.lower();
            let e: Vec<f64> = (0..row.times.len()).map(|_| rng.sample(StandardNormal)).collect();
            let sd = t.sigma2_eps.sqrt();
            for (k, yk) in y.iter_mut().enumerate() {
                *yk += sd * (0..=k).map(|j| l[(k, j)] * e[j]).sum::<f64>();
            }
            let p = logistic(t.beta[0] + t.beta[1] * x);
            let d = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
            Individual::intercept_only(row.id.clone(), row.times.clone(), y, d)
        })
        .collect()
}

/// Simulates one dataset from the design's truth. Draws where every
/// outcome falls in one class are discarded and redrawn from the next
/// derived seed.
pub fn simulate_dataset(design: &SimDesign) -> Result<Vec<Individual>> {
    design.truth.validate()?;
    for attempt in 0..1000 {
        let data = simulate_once(design, derive_seed(design.seed, attempt))?;
        let ones = data.iter().filter(|d| d.outcome == 1.0).count();
        if ones > 0 && ones < data.len() {
            return Ok(data);
        }
    }
    Err(Error::Numeric("could not simulate a dataset with both outcome classes".into()))
}

/// Posterior estimate of one parameter in one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Results of fitting one variant to one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateFit {
    pub replicate: usize,
    pub estimates: Vec<Estimate>,
    pub lpml_mean: f64,
    pub lpml_sum: f64,
    pub auc: f64,
    pub error_rate: f64,
}

/// One row of the bias and coverage report.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterReport {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub sd_mean: f64,
    pub median: f64,
    pub sd_median: f64,
    pub coverage: f64,
}

/// Aggregate over replicates for one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationReport {
    pub variant: String,
    pub parameters: Vec<ParameterReport>,
    pub fits: Vec<ReplicateFit>,
    pub failures: Vec<(usize, String)>,
}

impl ReplicationReport {
    pub fn parameter(&self, name: &str) -> Option<&ParameterReport> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// A named fitting configuration.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub config: FitConfig,
}

fn fit_replicate(data: &[Individual], config: &FitConfig, replicate: usize, truth: &SimTruth) -> Result<ReplicateFit> {
    let store = run_chain(data, config)?;
    let chains: Vec<ScalarChain> = store.scalar_chains();
    let mut estimates = Vec::new();
    for (name, _) in truth.named() {
        let Some(c) = chains.iter().find(|c| c.name == name) else {
            continue;
        };
        let s = summarize(&c.values)?;
        estimates.push(Estimate {
            name: name.to_string(),
            mean: s.mean,
            median: s.median,
            lower: s.q025,
            upper: s.q975,
        });
    }
    let model = JointModel::new(config.family, config.error_model);
    let cpo = cpo_report(&model, data, &store, CpoKernel::Conditional)?;
    let (report, _, _) = evaluate(&model, data, &store, 0.5)?;
    Ok(ReplicateFit {
        replicate,
        estimates,
        lpml_mean: cpo.lpml_mean,
        lpml_sum: cpo.lpml_sum,
        auc: report.auc.unwrap_or(f64::NAN),
        error_rate: report.error_rate,
    })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn aggregate(variant: &str, truth: &SimTruth, fits: Vec<ReplicateFit>, failures: Vec<(usize, String)>) -> ReplicationReport {
    let mut parameters = Vec::new();
    for (name, value) in truth.named() {
        let est: Vec<&Estimate> = fits.iter().filter_map(|f| f.estimates.iter().find(|e| e.name == name)).collect();
        if est.is_empty() {
            continue;
        }
        let (mean, sd_mean) = mean_sd(&est.iter().map(|e| e.mean).collect::<Vec<_>>());
        let (median, sd_median) = mean_sd(&est.iter().map(|e| e.median).collect::<Vec<_>>());
        let covered = est.iter().filter(|e| e.lower <= value && value <= e.upper).count();
        parameters.push(ParameterReport {
            name: name.to_string(),
            truth: value,
            mean,
            sd_mean,
            median,
            sd_median,
            coverage: covered as f64 / est.len() as f64,
        });
    }
    ReplicationReport {
        variant: variant.to_string(),
        parameters,
        fits,
        failures,
    }
}

/// Simulates `n_reps` datasets and fits every variant to each. Replicate
/// `r` uses data seed `derive_seed(design.seed, r)` and chain seed
/// `derive_seed(variant seed, r)`; results are reduced in replicate order,
/// so the report does not depend on scheduling. Failed fits are recorded
/// and skipped.
pub fn run_replication_study(design: &SimDesign, n_reps: usize, variants: &[Variant]) -> Result<Vec<ReplicationReport>> {
    if n_reps == 0 {
        return Err(Error::config("reps", "need at least one replicate"));
    }
    design.truth.validate()?;
    let jobs: Vec<(usize, usize)> = (0..n_reps).flat_map(|r| (0..variants.len()).map(move |v| (r, v))).collect();
    let results: Vec<(usize, usize, Result<ReplicateFit>)> = jobs
        .par_iter()
        .map(|&(r, v)| {
            let rep_design = SimDesign {
                seed: derive_seed(design.seed, r as u64),
                ..design.clone()
            };
            let mut config = variants[v].config.clone();
            config.seed = derive_seed(config.seed, r as u64);
            let fit = simulate_dataset(&rep_design).and_then(|data| fit_replicate(&data, &config, r, &design.truth));
            (r, v, fit)
        })
        .collect();
    let mut reports = Vec::with_capacity(variants.len());
    for (v, variant) in variants.iter().enumerate() {
        let mut fits = Vec::new();
        let mut failures = Vec::new();
        for (r, _, res) in results.iter().filter(|(_, vv, _)| *vv == v) {
            match res {
                Ok(f) => fits.push(f.clone()),
                Err(e) => failures.push((*r, e.to_string())),
            }
        }
        reports.push(aggregate(&variant.name, &design.truth, fits, failures));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_design_matches_generator() {
        let rows = generate_design(BUNDLED_DESIGN_SEED);
        assert_eq!(format_design(&rows), BUNDLED_DESIGN);
    }

    #[test]
    fn bundled_design_shape() {
        let d = SimDesign::bundled(1);
        assert_eq!(d.rows.len(), 173);
        assert_eq!(d.group_sizes(), [49, 124]);
        let mut hist = [0usize; 7];
        for r in &d.rows {
            hist[r.times.len()] += 1;
            assert!(r.times.iter().all(|t| (1.0..=80.0).contains(t) && t.fract() == 0.0));
        }
        assert_eq!(hist, [0, 52, 54, 57, 7, 2, 1]);
        assert_eq!(d.rows.iter().map(|r| r.times.len()).sum::<usize>(), 375);
    }

    #[test]
    fn design_parse_errors_carry_line() {
        let err = parse_design("id\tgroup\ttimes\nA\t1\t1,2\nB\t2\t3\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }));
    }

    #[test]
    fn simulation_is_deterministic() {
        let d = SimDesign::bundled(11);
        assert_eq!(simulate_dataset(&d).unwrap(), simulate_dataset(&d).unwrap());
    }

    #[test]
    fn noiseless_simulation_follows_mean() {
        let mut d = SimDesign::bundled(5);
        d.truth.sigma2_eps = 0.0;
        d.truth.sigma2_x = 0.0;
        let data = simulate_dataset(&d).unwrap();
        for ind in &data {
            let g = LogisticGrowth.eval(&d.truth.alpha, &[d.truth.mu_x], &ind.times).unwrap();
            assert_eq!(g, ind.y);
        }
    }
}
