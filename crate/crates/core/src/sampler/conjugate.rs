use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dist::{sample_inverse_gamma, sample_inverse_wishart, standard_normals};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, spd_inverse, symmetrize};
use crate::model::Hyperparameters;

/// `μ_X | X, Σ_X ~ N(P⁻¹(C⁻¹c1 + Σ_X⁻¹ ΣX_i), P⁻¹)` with `P = C⁻¹ + mΣ_X⁻¹`.
/// `x` holds one random-effect vector per column.
pub fn draw_mu_x<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    sigma_x: &DMatrix<f64>,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let q = hyper.q();
    let m = x.ncols() as f64;
    let prior_prec = spd_inverse(&hyper.mu_cov, "C")?;
    let sigma_inv = spd_inverse(sigma_x, "sigma_x")?;
    let sum: DVector<f64> = if x.ncols() == 0 {
        DVector::zeros(q)
    } else {
        x.column_sum()
    };
    let prec = symmetrize(&(&prior_prec + &sigma_inv * m));
    let chol = cholesky(&prec).ok_or_else(|| Error::Numeric("mu_x posterior precision is singular".into()))?;
    let mean = chol.solve(&(&prior_prec * &hyper.mu_mean + &sigma_inv * sum));
    // x = mean + L'^{-1} z has covariance (LL')⁻¹
    let z = DVector::from_vec(standard_normals(q, rng));
    let l = chol.l();
    let offset = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numeric("mu_x posterior factor is singular".into()))?;
    Ok(mean + offset)
}

/// `Σ_X | X, μ_X ~ IW(v + m, vV + Σ(X_i - μ_X)(X_i - μ_X)')`.
pub fn draw_sigma_x<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    mu_x: &DVector<f64>,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let mut scale = hyper.sigma_x_iw_scale();
    for col in x.column_iter() {
        let d = col - mu_x;
        scale += &d * d.transpose();
    }
    sample_inverse_wishart(hyper.sigma_x_df + x.ncols() as f64, &symmetrize(&scale), rng)
}

/// `σ²_ε | · ~ IG(shape + N/2, rate + RSS/2)` where `RSS` sums the whitened
/// residual quadratic forms over individuals.
pub fn draw_sigma_eps<R: Rng + ?Sized>(n_obs: usize, rss: f64, hyper: &Hyperparameters, rng: &mut R) -> Result<f64> {
    sample_inverse_gamma(
        hyper.sigma_eps_shape + 0.5 * n_obs as f64,
        hyper.sigma_eps_rate + 0.5 * rss,
        rng,
    )
}

/// Gaussian-outcome dispersion `φ | · ~ IG(r1 + m/2, rate + Σ(D_i - η_i)²/2)`.
pub fn draw_phi<R: Rng + ?Sized>(m: usize, ss: f64, hyper: &Hyperparameters, rng: &mut R) -> Result<f64> {
    sample_inverse_gamma(hyper.phi_shape + 0.5 * m as f64, hyper.phi_rate + 0.5 * ss, rng)
}
