//! Sampling and log densities for the inverse-gamma, inverse-Wishart and
//! (truncated) normal distributions used by the conjugate updates.
//!
//! Inverse-gamma quantities are always (shape, rate): the density is
//! `x^{-shape-1} exp(-rate / x)` and the mean is `rate / (shape - 1)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det_from_lower, symmetrize};

pub fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "inverse gamma needs positive shape/rate, got ({shape}, {rate})"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(1.0 / g.sample(rng))
}

pub fn inverse_gamma_log_density(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

fn ln_multivariate_gamma(a: f64, q: usize) -> f64 {
    let qf = q as f64;
    qf * (qf - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (1..=q).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Log density of `IW(df, scale)` at `sigma`, with mean `scale / (df - q - 1)`.
pub fn inverse_wishart_log_density(sigma: &DMatrix<f64>, df: f64, scale: &DMatrix<f64>) -> f64 {
    let q = sigma.nrows();
    let (Some(cs), Some(cp)) = (cholesky(&symmetrize(sigma)), cholesky(&symmetrize(scale))) else {
        return f64::NEG_INFINITY;
    };
    let log_det_sigma = log_det_from_lower(&cs.l());
    let log_det_scale = log_det_from_lower(&cp.l());
    let trace = (scale * cs.inverse()).trace();
    0.5 * df * log_det_scale
        - 0.5 * df * q as f64 * std::f64::consts::LN_2
        - ln_multivariate_gamma(0.5 * df, q)
        - 0.5 * (df + q as f64 + 1.0) * log_det_sigma
        - 0.5 * trace
}

/// Draws from `IW(df, scale)` by inverting a Bartlett-decomposition Wishart
/// draw with scale matrix `scale⁻¹`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let q = scale.nrows();
    if df <= q as f64 - 1.0 {
        return Err(Error::InvalidParameter(format!(
            "inverse Wishart degrees of freedom {df} must exceed q - 1 = {}",
            q as f64 - 1.0
        )));
    }
    let scale_chol = cholesky(&symmetrize(scale))
        .ok_or_else(|| Error::Numeric("inverse Wishart scale matrix is not positive definite".into()))?;
    let precision_chol = cholesky(&symmetrize(&scale_chol.inverse()))
        .ok_or_else(|| Error::Numeric("inverse Wishart scale matrix is degenerate".into()))?
        .l();

    let mut bartlett = DMatrix::<f64>::zeros(q, q);
    for i in 0..q {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| Error::Numeric(e.to_string()))?;
        bartlett[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let factor = &precision_chol * bartlett;
    let wishart = &factor * factor.transpose();
    let inv = cholesky(&symmetrize(&wishart))
        .ok_or_else(|| Error::Numeric("Wishart draw is singular".into()))?
        .inverse();
    Ok(symmetrize(&inv))
}

pub fn normal_log_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (crate::linalg::LN_2PI + var.ln() + d * d / var)
}

/// Draw from `N(mean, sd²)` truncated to `[lower, upper]` by inverse CDF.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> Result<f64> {
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let (za, zb) = ((lower - mean) / sd, (upper - mean) / sd);
    // Narrow standardized interval: the CDF difference cancels, but the
    // density is nearly flat, so rejection from a uniform accepts with
    // probability at least e⁻¹.
    let width = zb - za;
    let near = if za > 0.0 { za } else if zb < 0.0 { -zb } else { 0.0 };
    if width > 0.0 && width * (2.0 * near + width) < 2.0 {
        loop {
            let u: f64 = rng.random_range(0.0..=1.0);
            let z = za + width * u;
            let accept: f64 = rng.random();
            if accept.ln() <= -0.5 * (z * z - near * near) {
                return Ok((mean + sd * z).clamp(lower, upper));
            }
        }
    }
    // Work in the lower tail, where the CDF keeps its precision.
    let flip = za > 0.0;
    let (lo, hi) = if flip { (-zb, -za) } else { (za, zb) };
    let (a, b) = (std.cdf(lo), std.cdf(hi));
    if !(b > a) {
        return Err(Error::Numeric(format!(
            "truncated normal N({mean}, {sd}²) has no mass in [{lower}, {upper}]"
        )));
    }
    let u: f64 = rng.random_range(a..b);
    let z = std.inverse_cdf(u);
    let x = mean + sd * if flip { -z } else { z };
    Ok(x.clamp(lower, upper))
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(x)
}

pub fn dvector(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn truncated_normal_with_huge_scale_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_truncated_normal(0.001, 2.3e18, 0.0, 0.999, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!(draws.iter().all(|v| (0.0..=0.999).contains(v)));
        assert!((mean - 0.4995).abs() < 4.0 * 0.2884 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn truncated_normal_means_on_both_branches() {
        // [0.2, 2.2] goes through the CDF inversion, the narrow ones through
        // rejection. E[Z | a < Z < b] = (φ(a) - φ(b)) / (Φ(b) - Φ(a)).
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 40_000;
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        for (lo, hi) in [(0.2, 2.2), (0.2, 0.7), (0.7, 1.2), (-3.1, -2.8)] {
            let want = (phi(lo) - phi(hi)) / (standard_normal_cdf(hi) - standard_normal_cdf(lo));
            let draws: Vec<f64> = (0..n).map(|_| sample_truncated_normal(0.0, 1.0, lo, hi, &mut rng).unwrap()).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            // the truncated sd is below (hi - lo) / 2
            assert!((mean - want).abs() < 4.0 * 0.5 * (hi - lo) / (n as f64).sqrt(), "[{lo}, {hi}]: {mean} vs {want}");
        }
    }

    #[test]
    fn inverse_gamma_density_integrates_to_one() {
        let (shape, rate) = (3.0, 2.0);
        let h = 1e-3;
        let total: f64 = (1..200_000)
            .map(|i| inverse_gamma_log_density(i as f64 * h, shape, rate).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn scalar_inverse_wishart_is_inverse_gamma() {
        let s = DMatrix::from_element(1, 1, 0.7);
        let psi = DMatrix::from_element(1, 1, 2.5);
        let iw = inverse_wishart_log_density(&s, 9.0, &psi);
        let ig = inverse_gamma_log_density(0.7, 4.5, 1.25);
        assert!((iw - ig).abs() < 1e-12);
    }

    #[test]
    fn truncated_normal_stays_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = sample_truncated_normal(0.98, 0.05, 0.0, 0.999, &mut rng).unwrap();
            assert!((0.0..=0.999).contains(&x));
        }
    }

    #[test]
    fn inverse_wishart_draws_are_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        for _ in 0..200 {
            let s = sample_inverse_wishart(5.0, &psi, &mut rng).unwrap();
            assert!(crate::linalg::is_spd(&s));
        }
    }
}
