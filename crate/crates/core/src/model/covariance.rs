//! CAR(1) error covariance `σ² Σ_i(ρ)` with `(Σ_i)_{k,l} = ρ^{|t_k - t_l|}`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_solve_in_place, log_det_from_lower, LN_2PI};

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rho = {rho} must lie in [0, 1)")));
    }
    Ok(())
}

/// Unscaled CAR(1) correlation matrix. `ρ = 0` gives the identity (0⁰ = 1 on
/// the diagonal).
pub fn car1_correlation(rho: f64, times: &[f64]) -> Result<DMatrix<f64>> {
    check_rho(rho)?;
    let n = times.len();
    if rho == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    if times.windows(2).any(|w| w[0] == w[1]) || has_duplicates(times) {
        return Err(Error::SingularCovariance(format!(
            "duplicate observation times with rho = {rho}"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            rho.powf((times[i] - times[j]).abs())
        }
    }))
}

fn has_duplicates(times: &[f64]) -> bool {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).any(|w| w[0] == w[1])
}

/// `σ² Σ_i(ρ)` for the given observation times.
pub fn build_error_cov(sigma2: f64, rho: f64, times: &[f64]) -> Result<DMatrix<f64>> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma2 = {sigma2} must be > 0")));
    }
    Ok(car1_correlation(rho, times)? * sigma2)
}

/// Cholesky factorization of one individual's correlation matrix `Σ_i(ρ)`.
///
/// The scale `σ²` is applied analytically, so a factor is valid for every
/// `σ²` at fixed `ρ`. For increasing times the CAR(1) process is Markov and
/// `L` has the closed form `L_{kj} = ρ^{t_k - t_j} s_j` with
/// `s_j = √(1 - ρ^{2(t_j - t_{j-1})})` (`s_1 = 1`), so whitening is a
/// two-term recursion.
#[derive(Debug, Clone)]
pub struct ErrorCovFactor {
    kind: FactorKind,
    log_det: f64,
    n: usize,
}

#[derive(Debug, Clone)]
enum FactorKind {
    Identity,
    /// `phi[k] = ρ^{t_k - t_{k-1}}`, `inv_s[k] = 1 / s_k`; index 0 unused.
    Markov { phi: Vec<f64>, inv_s: Vec<f64>, times: Vec<f64>, rho: f64 },
    /// Unsorted times: dense lower factor.
    Dense(DMatrix<f64>),
}

impl ErrorCovFactor {
    pub fn new(rho: f64, times: &[f64]) -> Result<Self> {
        check_rho(rho)?;
        let n = times.len();
        if rho == 0.0 {
            return Ok(Self {
                kind: FactorKind::Identity,
                log_det: 0.0,
                n,
            });
        }
        if times.windows(2).all(|w| w[1] > w[0]) {
            let ln_rho = rho.ln();
            let mut phi = vec![0.0; n];
            let mut inv_s = vec![1.0; n];
            let mut log_det = 0.0;
            for k in 1..n {
                let dt = times[k] - times[k - 1];
                phi[k] = (dt * ln_rho).exp();
                // 1 - ρ^{2Δt} without cancellation
                let s2 = -(2.0 * dt * ln_rho).exp_m1();
                if !(s2 > 0.0) {
                    return Err(Error::SingularCovariance(format!(
                        "CAR(1) correlation with rho = {rho} is singular at times {} and {}",
                        times[k - 1],
                        times[k]
                    )));
                }
                inv_s[k] = 1.0 / s2.sqrt();
                log_det += s2.ln();
            }
            return Ok(Self {
                kind: FactorKind::Markov {
                    phi,
                    inv_s,
                    times: times.to_vec(),
                    rho,
                },
                log_det,
                n,
            });
        }
        let corr = car1_correlation(rho, times)?;
        let chol = cholesky(&corr).ok_or_else(|| {
            Error::SingularCovariance(format!("CAR(1) correlation with rho = {rho} failed to factorize"))
        })?;
        let lower = chol.l();
        let log_det = log_det_from_lower(&lower);
        Ok(Self {
            kind: FactorKind::Dense(lower),
            log_det,
            n,
        })
    }

    pub fn for_individual(rho: f64, ind: &super::Individual) -> Result<Self> {
        Self::new(rho, &ind.times).map_err(|e| Error::NumericIndividual {
            id: ind.id.clone(),
            msg: e.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `log |Σ_i(ρ)|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Replaces `r` by `L⁻¹ r`.
    pub fn whiten(&self, r: &mut [f64]) {
        match &self.kind {
            FactorKind::Identity => {}
            FactorKind::Markov { phi, inv_s, .. } => {
                for k in (1..r.len()).rev() {
                    r[k] = (r[k] - phi[k] * r[k - 1]) * inv_s[k];
                }
            }
            FactorKind::Dense(l) => forward_solve_in_place(l, r),
        }
    }

    /// `r' Σ_i(ρ)⁻¹ r`; `r` is used as scratch.
    pub fn quad_form_in_place(&self, r: &mut [f64]) -> f64 {
        self.whiten(r);
        r.iter().map(|v| v * v).sum()
    }

    pub fn quad_form(&self, r: &[f64]) -> f64 {
        let mut z = r.to_vec();
        self.quad_form_in_place(&mut z)
    }

    /// `log N(r; 0, σ² Σ_i(ρ))` given the residual quadratic form.
    pub fn log_density_from_quad(&self, quad: f64, sigma2: f64) -> f64 {
        -0.5 * (self.n as f64 * (LN_2PI + sigma2.ln()) + self.log_det + quad / sigma2)
    }

    /// `Σ_i(ρ)⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let mut z = v.to_vec();
        self.whiten(&mut z);
        match &self.kind {
            FactorKind::Identity => {}
            FactorKind::Markov { phi, inv_s, .. } => {
                // L⁻ᵀ = Bᵀ D⁻¹ with B unit lower bidiagonal (-φ below the diagonal)
                let n = z.len();
                for k in 0..n {
                    z[k] *= inv_s[k];
                    if k > 0 {
                        z[k - 1] -= phi[k] * z[k];
                    }
                }
            }
            FactorKind::Dense(l) => {
                let n = z.len();
                for i in (0..n).rev() {
                    let mut acc = z[i];
                    for j in i + 1..n {
                        acc -= l[(j, i)] * z[j];
                    }
                    z[i] = acc / l[(i, i)];
                }
            }
        }
        z
    }

    /// Lower factor `L` (identity when `ρ = 0`).
    pub fn lower(&self) -> DMatrix<f64> {
        match &self.kind {
            FactorKind::Identity => DMatrix::identity(self.n, self.n),
            FactorKind::Markov { inv_s, times, rho, .. } => DMatrix::from_fn(self.n, self.n, |k, j| {
                if j > k {
                    0.0
                } else {
                    rho.powf(times[k] - times[j]) / inv_s[j]
                }
            }),
            FactorKind::Dense(l) => l.clone(),
        }
    }
}

/// `(r' Σ(ρ)⁻¹ r, log |Σ(ρ)|)` for one residual vector without storing a
/// factor.
pub fn car1_quad_log_det(rho: f64, times: &[f64], r: &[f64]) -> Result<(f64, f64)> {
    if rho == 0.0 || !times.windows(2).all(|w| w[1] > w[0]) {
        let f = ErrorCovFactor::new(rho, times)?;
        return Ok((f.quad_form(r), f.log_det()));
    }
    check_rho(rho)?;
    let ln_rho = rho.ln();
    let mut quad = r.first().map_or(0.0, |v| v * v);
    let mut log_det = 0.0;
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let phi = (dt * ln_rho).exp();
        let s2 = -(2.0 * dt * ln_rho).exp_m1();
        if !(s2 > 0.0) {
            return Err(Error::SingularCovariance(format!("CAR(1) correlation with rho = {rho} is singular")));
        }
        let e = r[k] - phi * r[k - 1];
        quad += e * e / s2;
        log_det += s2.ln();
    }
    Ok((quad, log_det))
}

/// First and second derivatives in `ρ` of `-(log |Σ(ρ)| + r'Σ(ρ)⁻¹r/σ²)/2`.
///
/// Uses the Markov form, so it needs `ρ > 0` and strictly increasing times;
/// returns `None` otherwise.
pub fn car1_rho_derivatives(rho: f64, times: &[f64], r: &[f64], sigma2: f64) -> Option<(f64, f64)> {
    if !(rho > 0.0 && rho < 1.0) || !times.windows(2).all(|w| w[1] > w[0]) {
        return None;
    }
    let ln_rho = rho.ln();
    let (mut d1, mut d2) = (0.0, 0.0);
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let a = (dt * ln_rho).exp();
        let da = dt * a / rho;
        let dda = dt * (dt - 1.0) * a / (rho * rho);
        let u = -(2.0 * dt * ln_rho).exp_m1();
        let (p, e) = (r[k - 1], r[k] - a * r[k - 1]);
        // h(a) = ln u + e²/(σ²u), u = 1 - a²
        let n = 2.0 * a * e * e - 2.0 * e * p * u;
        let ha = -2.0 * a / u + n / (sigma2 * u * u);
        let haa = -2.0 / u - 4.0 * a * a / (u * u)
            + (2.0 * p * p * u + 2.0 * e * e) / (sigma2 * u * u)
            + 4.0 * a * n / (sigma2 * u * u * u);
        d1 -= 0.5 * ha * da;
        d2 -= 0.5 * (haa * da * da + ha * dda);
    }
    (d1.is_finite() && d2.is_finite()).then_some((d1, d2))
}
