use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{is_spd, Gaussian};

/// Largest correlation the CAR(1) block may visit; keeps `Σ_i(ρ)` away from
/// the singular `ρ = 1` boundary.
pub const RHO_MAX: f64 = 0.999;

/// Prior constants.
///
/// Priors: `α ~ N(a1, A)`, `μ_X ~ N(c1, C)`, `Σ_X ~ IW(v, vV)`,
/// `σ²_ε ~ IG(shape, rate)`, `β ~ N(s, S)`, `ρ ~ U(lower, upper)` and, for
/// Gaussian outcomes only, `φ ~ IG(shape, rate)`. Inverse-gamma priors are
/// parameterized by (shape, rate): density `∝ x^{-shape-1} e^{-rate/x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub alpha_mean: DVector<f64>,
    pub alpha_cov: DMatrix<f64>,
    pub mu_mean: DVector<f64>,
    pub mu_cov: DMatrix<f64>,
    pub sigma_x_df: f64,
    /// `V`; the inverse-Wishart scale matrix is `v · V`.
    pub sigma_x_scale: DMatrix<f64>,
    pub sigma_eps_shape: f64,
    pub sigma_eps_rate: f64,
    pub beta_mean: DVector<f64>,
    pub beta_cov: DMatrix<f64>,
    pub phi_shape: f64,
    pub phi_rate: f64,
    pub rho_lower: f64,
    pub rho_upper: f64,
}

impl Hyperparameters {
    /// Weakly informative defaults sized for `p` fixed effects, `q` random
    /// effects and `r` GLM coefficients.
    pub fn weakly_informative(p: usize, q: usize, r: usize) -> Self {
        Self {
            alpha_mean: DVector::zeros(p),
            alpha_cov: DMatrix::identity(p, p) * 1000.0,
            mu_mean: DVector::zeros(q),
            mu_cov: DMatrix::identity(q, q) * 1000.0,
            sigma_x_df: 6.0,
            sigma_x_scale: DMatrix::identity(q, q) * 0.00083,
            sigma_eps_shape: 3.0,
            sigma_eps_rate: 0.01,
            beta_mean: DVector::zeros(r),
            beta_cov: DMatrix::identity(r, r) * 1000.0,
            phi_shape: 3.0,
            phi_rate: 0.01,
            rho_lower: 0.0,
            rho_upper: 1.0,
        }
    }

    pub fn p(&self) -> usize {
        self.alpha_mean.len()
    }

    pub fn q(&self) -> usize {
        self.mu_mean.len()
    }

    pub fn r(&self) -> usize {
        self.beta_mean.len()
    }

    /// `v · V`, the inverse-Wishart scale.
    pub fn sigma_x_iw_scale(&self) -> DMatrix<f64> {
        &self.sigma_x_scale * self.sigma_x_df
    }

    /// Effective upper end of the ρ support.
    pub fn rho_max(&self) -> f64 {
        self.rho_upper.min(RHO_MAX)
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q, r) = (self.p(), self.q(), self.r());
        let square = |m: &DMatrix<f64>, n: usize, key: &str| -> Result<()> {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::config(key, format!("expected a {n}x{n} matrix")));
            }
            if !is_spd(m) {
                return Err(Error::config(key, "matrix must be symmetric positive definite"));
            }
            Ok(())
        };
        square(&self.alpha_cov, p, "A")?;
        square(&self.mu_cov, q, "C")?;
        square(&self.sigma_x_scale, q, "V")?;
        square(&self.beta_cov, r, "S")?;
        if !(self.sigma_x_df > q as f64 - 1.0) {
            return Err(Error::config("v", format!("must exceed q - 1 = {}", q as f64 - 1.0)));
        }
        for (key, v) in [
            ("v1", self.sigma_eps_shape),
            ("v2", self.sigma_eps_rate),
            ("r1", self.phi_shape),
            ("r2", self.phi_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be a positive finite number"));
            }
        }
        if !(0.0 <= self.rho_lower && self.rho_lower < self.rho_upper && self.rho_upper <= 1.0) {
            return Err(Error::config("rho_lower", "rho prior bounds must satisfy 0 <= lower < upper <= 1"));
        }
        if self.rho_lower >= RHO_MAX {
            return Err(Error::config("rho_lower", format!("must be below {RHO_MAX}")));
        }
        Ok(())
    }

    pub fn alpha_prior(&self) -> Result<Gaussian> {
        Gaussian::new(self.alpha_mean.clone(), &self.alpha_cov)
    }

    pub fn beta_prior(&self) -> Result<Gaussian> {
        Gaussian::new(self.beta_mean.clone(), &self.beta_cov)
    }

    pub fn mu_prior(&self) -> Result<Gaussian> {
        Gaussian::new(self.mu_mean.clone(), &self.mu_cov)
    }
}

/// A vector hyperparameter as written in a configuration: either one value
/// broadcast to the required length or explicit entries.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorSpec {
    Fill(f64),
    Values(Vec<f64>),
}

impl VectorSpec {
    fn resolve(&self, n: usize, key: &str) -> Result<DVector<f64>> {
        match self {
            VectorSpec::Fill(v) => Ok(DVector::from_element(n, *v)),
            VectorSpec::Values(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
            VectorSpec::Values(v) => Err(Error::config(key, format!("expected {n} entries, got {}", v.len()))),
        }
    }
}

/// A matrix hyperparameter: `c·I`, a diagonal, or full row-major entries.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSpec {
    ScaledIdentity(f64),
    Diagonal(Vec<f64>),
    Full(Vec<f64>),
}

impl MatrixSpec {
    fn resolve(&self, n: usize, key: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::ScaledIdentity(c) => Ok(DMatrix::identity(n, n) * *c),
            MatrixSpec::Diagonal(d) if d.len() == n => Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d))),
            MatrixSpec::Full(v) if v.len() == n * n => Ok(DMatrix::from_row_slice(n, n, v)),
            _ => Err(Error::config(key, format!("expected a {n}x{n} matrix"))),
        }
    }
}

/// Hyperparameters as configured, before the model dimensions are known.
///
/// The second inverse-gamma constant (`v2`, `r2`) is a rate, as in the
/// `dgamma(shape, rate)` prior on a precision.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperSpec {
    pub alpha_mean: VectorSpec,
    pub alpha_cov: MatrixSpec,
    pub mu_mean: VectorSpec,
    pub mu_cov: MatrixSpec,
    pub sigma_x_df: f64,
    pub sigma_x_scale: MatrixSpec,
    pub sigma_eps_shape: f64,
    pub sigma_eps_rate: f64,
    pub beta_mean: VectorSpec,
    pub beta_cov: MatrixSpec,
    pub phi_shape: f64,
    pub phi_rate: f64,
    pub rho_lower: f64,
    pub rho_upper: f64,
}

impl Default for HyperSpec {
    /// Weakly informative defaults: `a1 = s = 0`, `A = S = 1000 I`, `c1 = 0`,
    /// `C = 1000`, `v = 6`, `V = 0.00083`, `v1 = 3`, `v2 = 0.01`, `ρ ~ U(0, 1)`.
    fn default() -> Self {
        Self {
            alpha_mean: VectorSpec::Fill(0.0),
            alpha_cov: MatrixSpec::ScaledIdentity(1000.0),
            mu_mean: VectorSpec::Fill(0.0),
            mu_cov: MatrixSpec::ScaledIdentity(1000.0),
            sigma_x_df: 6.0,
            sigma_x_scale: MatrixSpec::ScaledIdentity(0.00083),
            sigma_eps_shape: 3.0,
            sigma_eps_rate: 0.01,
            beta_mean: VectorSpec::Fill(0.0),
            beta_cov: MatrixSpec::ScaledIdentity(1000.0),
            phi_shape: 3.0,
            phi_rate: 0.01,
            rho_lower: 0.0,
            rho_upper: 1.0,
        }
    }
}

impl HyperSpec {
    pub fn resolve(&self, p: usize, q: usize, r: usize) -> Result<Hyperparameters> {
        for (key, v) in [("v2", self.sigma_eps_rate), ("r2", self.phi_rate)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be a positive finite number"));
            }
        }
        let hyper = Hyperparameters {
            alpha_mean: self.alpha_mean.resolve(p, "a1")?,
            alpha_cov: self.alpha_cov.resolve(p, "A")?,
            mu_mean: self.mu_mean.resolve(q, "c1")?,
            mu_cov: self.mu_cov.resolve(q, "C")?,
            sigma_x_df: self.sigma_x_df,
            sigma_x_scale: self.sigma_x_scale.resolve(q, "V")?,
            sigma_eps_shape: self.sigma_eps_shape,
            sigma_eps_rate: self.sigma_eps_rate,
            beta_mean: self.beta_mean.resolve(r, "s")?,
            beta_cov: self.beta_cov.resolve(r, "S")?,
            phi_shape: self.phi_shape,
            phi_rate: self.phi_rate,
            rho_lower: self.rho_lower,
            rho_upper: self.rho_upper,
        };
        hyper.validate()?;
        Ok(hyper)
    }

    /// Exact spec for already-resolved hyperparameters.
    pub fn exact(h: &Hyperparameters) -> Self {
        let full = |m: &DMatrix<f64>| MatrixSpec::Full(m.transpose().as_slice().to_vec());
        Self {
            alpha_mean: VectorSpec::Values(h.alpha_mean.as_slice().to_vec()),
            alpha_cov: full(&h.alpha_cov),
            mu_mean: VectorSpec::Values(h.mu_mean.as_slice().to_vec()),
            mu_cov: full(&h.mu_cov),
            sigma_x_df: h.sigma_x_df,
            sigma_x_scale: full(&h.sigma_x_scale),
            sigma_eps_shape: h.sigma_eps_shape,
            sigma_eps_rate: h.sigma_eps_rate,
            beta_mean: VectorSpec::Values(h.beta_mean.as_slice().to_vec()),
            beta_cov: full(&h.beta_cov),
            phi_shape: h.phi_shape,
            phi_rate: h.phi_rate,
            rho_lower: h.rho_lower,
            rho_upper: h.rho_upper,
        }
    }
}
