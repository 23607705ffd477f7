//! Single-chain convergence checks and posterior summaries.

use crate::error::{Error, Result};
use crate::sampler::{ChainStore, ScalarChain};

/// Stricter pass threshold for `|z|`.
pub const GEWEKE_STRICT: f64 = 1.6;
/// Conventional two-sided 5% threshold for `|z|`.
pub const GEWEKE_CONVENTIONAL: f64 = 1.96;

/// Mean, SD and 95% interval of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
}

/// Linear-interpolation quantile of sorted values (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<PosteriorSummary> {
    if values.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 draws to summarize, got {}", values.len())));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(PosteriorSummary {
        mean,
        sd,
        q025: quantile_sorted(&sorted, 0.025),
        median: quantile_sorted(&sorted, 0.5),
        q975: quantile_sorted(&sorted, 0.975),
    })
}

/// Overlapping-batch-means estimate of the spectral density at zero, i.e.
/// the asymptotic variance `σ²` with `Var(mean) ≈ σ²/n`.
pub fn batch_means_variance(values: &[f64]) -> f64 {
    let n = values.len();
    let b = ((n as f64).sqrt().floor() as usize).max(1);
    if b >= n {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut window: f64 = values[..b].iter().sum();
    let mut ss = 0.0;
    for j in 0..=n - b {
        if j > 0 {
            window += values[j + b - 1] - values[j - 1];
        }
        ss += (window / b as f64 - mean).powi(2);
    }
    let (n, b) = (n as f64, b as f64);
    n * b / ((n - b) * (n - b + 1.0)) * ss
}

/// Geweke z comparing the first `frac_a` of the chain against the last
/// `frac_b`.
pub fn geweke_z(values: &[f64], frac_a: f64, frac_b: f64) -> Result<f64> {
    let n = values.len();
    if n < 100 {
        return Err(Error::Domain(format!("Geweke diagnostic needs at least 100 draws, got {n}")));
    }
    if !(frac_a > 0.0 && frac_b > 0.0 && frac_a + frac_b <= 1.0) {
        return Err(Error::Domain(format!("window fractions {frac_a} and {frac_b} are invalid")));
    }
    let na = ((frac_a * n as f64).floor() as usize).max(2);
    let nb = ((frac_b * n as f64).floor() as usize).max(2);
    let a = &values[..na];
    let b = &values[n - nb..];
    let (sa, sb) = (batch_means_variance(a), batch_means_variance(b));
    if !(sa > 0.0 && sb > 0.0) {
        return Err(Error::DegenerateChain("zero variance in a window".into()));
    }
    let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    Ok((mean(a) - mean(b)) / (sa / na as f64 + sb / nb as f64).sqrt())
}

/// One row of the diagnostic table.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub name: String,
    pub summary: PosteriorSummary,
    /// `None` when the chain is degenerate or too short.
    pub geweke_z: Option<f64>,
}

impl DiagnosticRow {
    pub fn passes(&self, threshold: f64) -> bool {
        self.geweke_z.is_some_and(|z| z.abs() < threshold)
    }
}

/// Summary and Geweke z for every free scalar parameter of a chain.
pub fn diagnose_chains(chains: &[ScalarChain], frac_a: f64, frac_b: f64) -> Result<Vec<DiagnosticRow>> {
    chains
        .iter()
        .map(|c| {
            Ok(DiagnosticRow {
                name: c.name.clone(),
                summary: summarize(&c.values)?,
                geweke_z: geweke_z(&c.values, frac_a, frac_b).ok(),
            })
        })
        .collect()
}

pub fn diagnose(store: &ChainStore) -> Result<Vec<DiagnosticRow>> {
    diagnose_chains(&store.scalar_chains(), 0.1, 0.5)
}
