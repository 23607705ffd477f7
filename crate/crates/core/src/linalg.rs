//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Dimensions in this crate are tiny (q, p, r ≤ a handful, n_i ≤ ~10), so the
//! helpers favour clarity over blocking. Covariances are always handled through
//! their lower Cholesky factor; nothing here forms an explicit inverse except
//! [`spd_inverse`], which is only used for small prior/posterior precisions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Cholesky::new(m.clone())
}

/// `log |M|` from the lower factor `L` of `M = L L'`.
pub fn log_det_from_lower(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves `L z = b` in place for lower-triangular `L`.
pub fn forward_solve_in_place(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut acc = b[i];
        for j in 0..i {
            acc -= l[(i, j)] * b[j];
        }
        b[i] = acc / l[(i, i)];
    }
}

/// Runs `f` on a zeroed buffer of length `n`, on the stack when small.
pub fn with_scratch<T>(n: usize, f: impl FnOnce(&mut [f64]) -> T) -> T {
    const STACK: usize = 32;
    if n <= STACK {
        let mut buf = [0.0; STACK];
        f(&mut buf[..n])
    } else {
        f(&mut vec![0.0; n])
    }
}

/// `(M + M') / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = cholesky(m).ok_or_else(|| Error::Numeric(format!("{what} is not positive definite")))?;
    Ok(symmetrize(&chol.inverse()))
}

pub fn is_spd(m: &DMatrix<f64>) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= 1e-10 * (1.0 + m.amax()) && cholesky(m).is_some()
}

/// Cholesky of `M + τI`, trying `τ = 0` first and then doubling `τ` from
/// `1e-6` while it stays at or below `max_ridge`. Returns the factor and the
/// ridge that was needed.
pub fn ridged_cholesky(m: &DMatrix<f64>, max_ridge: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = cholesky(m) {
        return Some((c, 0.0));
    }
    let n = m.nrows();
    let mut tau = 1e-6;
    while tau <= max_ridge {
        let shifted = m + DMatrix::<f64>::identity(n, n) * tau;
        if let Some(c) = cholesky(&shifted) {
            return Some((c, tau));
        }
        tau *= 2.0;
    }
    None
}

/// A multivariate normal stored as mean plus lower Cholesky factor of its covariance.
#[derive(Debug, Clone)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub chol: DMatrix<f64>,
    pub log_det: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let chol = cholesky(&symmetrize(cov))
            .ok_or_else(|| Error::Numeric("covariance is not positive definite".into()))?;
        Ok(Self::from_lower(mean, chol.l()))
    }

    pub fn from_lower(mean: DVector<f64>, chol: DMatrix<f64>) -> Self {
        let log_det = log_det_from_lower(&chol);
        Self { mean, chol, log_det }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut z: Vec<f64> = x.iter().zip(self.mean.iter()).map(|(a, b)| a - b).collect();
        forward_solve_in_place(&self.chol, &mut z);
        let quad: f64 = z.iter().map(|v| v * v).sum();
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det + quad)
    }

    /// `mean + L z` for a vector of standard normals `z`.
    pub fn transform(&self, z: &[f64]) -> DVector<f64> {
        let z = DVector::from_column_slice(z);
        &self.mean + &self.chol * z
    }
}

/// Log density of `N(x; mean, cov)` for a covariance given by its lower factor.
pub fn mvn_log_density_lower(x: &[f64], mean: &[f64], chol: &DMatrix<f64>, log_det: f64) -> f64 {
    let quad = with_scratch(x.len(), |z| {
        for ((zi, a), b) in z.iter_mut().zip(x).zip(mean) {
            *zi = a - b;
        }
        forward_solve_in_place(chol, z);
        z.iter().map(|v| v * v).sum::<f64>()
    });
    -0.5 * (x.len() as f64 * LN_2PI + log_det + quad)
}
