use std::fmt::Debug;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Individual;

/// The nonlinear mean `g(α, X_i; t_i)` of the longitudinal submodel.
///
/// Implementors supply evaluation; the derivative with respect to the random
/// effects defaults to central finite differences.
pub trait MeanFunction: Send + Sync + Debug {
    /// Number of fixed effects `p`.
    fn n_fixed(&self) -> usize;

    /// Number of random effects `q`.
    fn n_random(&self) -> usize;

    fn eval_into(&self, alpha: &[f64], x: &[f64], times: &[f64], out: &mut [f64]) -> Result<()>;

    fn eval(&self, alpha: &[f64], x: &[f64], times: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; times.len()];
        self.eval_into(alpha, x, times, &mut out)?;
        Ok(out)
    }

    /// `n × q` Jacobian `∂g/∂x`.
    fn jacobian_x(&self, alpha: &[f64], x: &[f64], times: &[f64]) -> Result<DMatrix<f64>> {
        let n = times.len();
        let mut jac = DMatrix::zeros(n, x.len());
        let mut xp = x.to_vec();
        let mut hi = vec![0.0; n];
        let mut lo = vec![0.0; n];
        for j in 0..x.len() {
            let h = 1e-6 * x[j].abs().max(1.0);
            xp[j] = x[j] + h;
            self.eval_into(alpha, &xp, times, &mut hi)?;
            xp[j] = x[j] - h;
            self.eval_into(alpha, &xp, times, &mut lo)?;
            xp[j] = x[j];
            for k in 0..n {
                jac[(k, j)] = (hi[k] - lo[k]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    /// Fills `jac` with `∂g_k/∂α_a` at `[a * n + k]` and `second` with
    /// `∂²g_k/∂α_a∂α_b` at `[(a * p + b) * n + k]`. Returns false when not
    /// implemented; callers then difference the log density numerically.
    fn alpha_derivatives_into(&self, _alpha: &[f64], _x: &[f64], _times: &[f64], _jac: &mut [f64], _second: &mut [f64]) -> bool {
        false
    }

    /// True when `g` is linear in `x`, so `jacobian_x` does not depend on `x`
    /// and the Gauss-Newton Hessian of the longitudinal term is exact.
    fn linear_in_random_effects(&self) -> bool {
        false
    }

    /// Scale-aware starting values `(α, X_1..X_m)`, if the function knows any.
    fn initial_values(&self, _data: &[Individual]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        None
    }
}

/// Logistic growth curve `x / (1 + exp(-(t - α₁)/α₂))` with a scalar
/// asymptote random effect.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticGrowth;

impl LogisticGrowth {
    fn shape(alpha: &[f64], t: f64) -> f64 {
        1.0 / (1.0 + (-(t - alpha[0]) / alpha[1]).exp())
    }

    fn check(alpha: &[f64], x: &[f64]) -> Result<()> {
        if alpha.len() != 2 || x.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "logistic growth needs 2 fixed effects and 1 random effect, got {} and {}",
                alpha.len(),
                x.len()
            )));
        }
        if alpha[1] == 0.0 || !alpha[1].is_finite() || !alpha[0].is_finite() {
            return Err(Error::InvalidParameter(format!("growth time scale alpha[2] = {} is invalid", alpha[1])));
        }
        Ok(())
    }
}

impl MeanFunction for LogisticGrowth {
    fn n_fixed(&self) -> usize {
        2
    }

    fn n_random(&self) -> usize {
        1
    }

    fn eval_into(&self, alpha: &[f64], x: &[f64], times: &[f64], out: &mut [f64]) -> Result<()> {
        Self::check(alpha, x)?;
        for (o, &t) in out.iter_mut().zip(times) {
            *o = x[0] * Self::shape(alpha, t);
        }
        Ok(())
    }

    fn jacobian_x(&self, alpha: &[f64], x: &[f64], times: &[f64]) -> Result<DMatrix<f64>> {
        Self::check(alpha, x)?;
        Ok(DMatrix::from_iterator(times.len(), 1, times.iter().map(|&t| Self::shape(alpha, t))))
    }

    fn alpha_derivatives_into(&self, alpha: &[f64], x: &[f64], times: &[f64], jac: &mut [f64], second: &mut [f64]) -> bool {
        if Self::check(alpha, x).is_err() {
            return false;
        }
        let (a1, a2, x) = (alpha[0], alpha[1], x[0]);
        let n = times.len();
        for (k, &t) in times.iter().enumerate() {
            // g = x s(z), z = (t - α₁)/α₂
            let z = (t - a1) / a2;
            let s = Self::shape(alpha, t);
            let ds = s * (1.0 - s);
            let dds = ds * (1.0 - 2.0 * s);
            let dz = [-1.0 / a2, -z / a2];
            let ddz = [0.0, 1.0 / (a2 * a2), 1.0 / (a2 * a2), 2.0 * z / (a2 * a2)];
            for a in 0..2 {
                jac[a * n + k] = x * ds * dz[a];
                for b in 0..2 {
                    second[(a * 2 + b) * n + k] = x * (dds * dz[a] * dz[b] + ds * ddz[a * 2 + b]);
                }
            }
        }
        true
    }

    fn linear_in_random_effects(&self) -> bool {
        true
    }

    /// Curve through the extremes: α₁ at the median observation time, α₂ a
    /// quarter of the observed time range, and each asymptote at the largest
    /// measurement of that individual.
    fn initial_values(&self, data: &[Individual]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        if data.is_empty() {
            return None;
        }
        let mut all: Vec<f64> = data.iter().flat_map(|d| d.times.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        let n = all.len();
        let median = if n % 2 == 1 {
            all[n / 2]
        } else {
            0.5 * (all[n / 2 - 1] + all[n / 2])
        };
        let range = all[n - 1] - all[0];
        let scale = if range > 0.0 { range / 4.0 } else { 1.0 };
        let xs = data
            .iter()
            .map(|d| vec![d.y.iter().copied().fold(f64::NEG_INFINITY, f64::max)])
            .collect();
        Some((vec![median, scale], xs))
    }
}

/// Logistic growth mean at each time: `x / (1 + exp(-(t - α₁)/α₂))`.
pub fn growth_mean(alpha: &[f64], x: f64, times: &[f64]) -> Result<Vec<f64>> {
    LogisticGrowth.eval(alpha, &[x], times)
}
