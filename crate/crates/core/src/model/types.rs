use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::is_spd;

/// One subject: sparse longitudinal series plus primary outcome and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: String,
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub outcome: f64,
    /// Fixed covariates `W_i`; the first entry is the intercept constant.
    pub covariates: Vec<f64>,
}

impl Individual {
    pub fn new(
        id: impl Into<String>,
        times: Vec<f64>,
        y: Vec<f64>,
        outcome: f64,
        covariates: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if times.is_empty() {
            return Err(Error::Data(format!("individual {id} has no observations")));
        }
        if times.len() != y.len() {
            return Err(Error::Data(format!(
                "individual {id}: {} times but {} measurements",
                times.len(),
                y.len()
            )));
        }
        if times.iter().chain(&y).chain(&covariates).any(|v| !v.is_finite()) || !outcome.is_finite() {
            return Err(Error::Data(format!("individual {id} has non-finite values")));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "individual {id}: times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if covariates.is_empty() {
            return Err(Error::Data(format!("individual {id} has no covariates (need at least the intercept)")));
        }
        Ok(Self {
            id,
            times,
            y,
            outcome,
            covariates,
        })
    }

    /// Intercept-only individual, the layout of the built-in application.
    pub fn intercept_only(id: impl Into<String>, times: Vec<f64>, y: Vec<f64>, outcome: f64) -> Result<Self> {
        Self::new(id, times, y, outcome, vec![1.0])
    }

    pub fn n_obs(&self) -> usize {
        self.times.len()
    }
}

/// Longitudinal error covariance structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorModel {
    Independent,
    Car1,
}

impl ErrorModel {
    pub fn has_rho(self) -> bool {
        matches!(self, ErrorModel::Car1)
    }
}

impl fmt::Display for ErrorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorModel::Independent => "independent",
            ErrorModel::Car1 => "car1",
        })
    }
}

impl FromStr for ErrorModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "independent" | "iid" => Ok(ErrorModel::Independent),
            "car1" | "car(1)" => Ok(ErrorModel::Car1),
            other => Err(Error::config("error_model", format!("unknown error model `{other}`"))),
        }
    }
}

/// Canonical-link GLM family for the primary outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Bernoulli,
    Poisson,
    Gaussian,
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-x})` without overflow.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Family {
    /// Whether the dispersion φ is a free parameter (only for Gaussian).
    pub fn has_dispersion(self) -> bool {
        matches!(self, Family::Gaussian)
    }

    /// Cumulant function `b(η)`.
    pub fn cumulant(self, eta: f64) -> f64 {
        match self {
            Family::Bernoulli => softplus(eta),
            Family::Poisson => eta.exp(),
            Family::Gaussian => 0.5 * eta * eta,
        }
    }

    /// `b'(η)`, the mean.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Family::Bernoulli => logistic(eta),
            Family::Poisson => eta.exp(),
            Family::Gaussian => eta,
        }
    }

    /// `b''(η)`, the variance function.
    pub fn variance(self, eta: f64) -> f64 {
        match self {
            Family::Bernoulli => {
                let p = logistic(eta);
                p * (1.0 - p)
            }
            Family::Poisson => eta.exp(),
            Family::Gaussian => 1.0,
        }
    }

    pub fn check_outcome(self, d: f64) -> Result<()> {
        let ok = match self {
            Family::Bernoulli => d == 0.0 || d == 1.0,
            Family::Poisson => d >= 0.0 && d.fract() == 0.0,
            Family::Gaussian => d.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!("outcome {d} is not valid for the {self} family")))
        }
    }

    /// `log f(d | η, φ)` including the normalising term `c(d, φ)`.
    pub fn log_density(self, d: f64, eta: f64, phi: f64) -> f64 {
        match self {
            Family::Bernoulli => d * eta - softplus(eta),
            Family::Poisson => d * eta - eta.exp() - statrs::function::gamma::ln_gamma(d + 1.0),
            Family::Gaussian => {
                let r = d - eta;
                -0.5 * (crate::linalg::LN_2PI + phi.ln() + r * r / phi)
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
            Family::Gaussian => "gaussian",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bernoulli" | "binomial" | "logistic" => Ok(Family::Bernoulli),
            "poisson" => Ok(Family::Poisson),
            "gaussian" | "normal" => Ok(Family::Gaussian),
            other => Err(Error::config("family", format!("unknown GLM family `{other}`"))),
        }
    }
}

/// One point of the joint parameter space.
///
/// Random effects are stored column-wise in a `q × m` matrix so a whole draw is
/// a single allocation; `x_i(i)` gives the slice for individual `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub mu_x: DVector<f64>,
    pub sigma_x: DMatrix<f64>,
    pub sigma2_eps: f64,
    /// CAR(1) correlation; held at 0 under independent errors.
    pub rho: f64,
    /// GLM dispersion; held at 1 for Bernoulli and Poisson outcomes.
    pub phi: f64,
    pub x: DMatrix<f64>,
}

impl ParameterState {
    pub fn q(&self) -> usize {
        self.mu_x.len()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn x_i(&self, i: usize) -> &[f64] {
        let q = self.q();
        &self.x.as_slice()[i * q..(i + 1) * q]
    }

    pub fn x_i_mut(&mut self, i: usize) -> &mut [f64] {
        let q = self.q();
        &mut self.x.as_mut_slice()[i * q..(i + 1) * q]
    }

    /// `β₀'W + β₁'X` for covariates `w` and random effects `x`.
    pub fn linear_predictor(&self, w: &[f64], x: &[f64]) -> f64 {
        let k = w.len();
        let b = self.beta.as_slice();
        w.iter().zip(&b[..k]).map(|(a, c)| a * c).sum::<f64>()
            + x.iter().zip(&b[k..]).map(|(a, c)| a * c).sum::<f64>()
    }

    /// Checks every support constraint of the state.
    pub fn validate(&self) -> Result<()> {
        let q = self.q();
        if self.sigma_x.nrows() != q || self.sigma_x.ncols() != q {
            return Err(Error::InvalidParameter(format!("sigma_x must be {q}x{q}")));
        }
        if self.x.nrows() != q {
            return Err(Error::InvalidParameter(format!("random effects must have {q} rows")));
        }
        if !is_spd(&self.sigma_x) {
            return Err(Error::InvalidParameter("sigma_x is not symmetric positive definite".into()));
        }
        if !(self.sigma2_eps > 0.0 && self.sigma2_eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2_eps = {} must be > 0", self.sigma2_eps)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!("rho = {} must lie in [0, 1)", self.rho)));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::InvalidParameter(format!("phi = {} must be > 0", self.phi)));
        }
        let finite = self
            .alpha
            .iter()
            .chain(self.beta.iter())
            .chain(self.mu_x.iter())
            .chain(self.x.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("state has non-finite entries".into()));
        }
        Ok(())
    }
}
