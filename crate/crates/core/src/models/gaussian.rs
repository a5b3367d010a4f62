//! Gaussian-mean and linear-regression models.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{Likelihood, Model, PriorBlock, ProxBlock};
use crate::error::{Error, Result};
use crate::linalg;
use crate::prox::{AffineConstraint, ConvexSet, ProxOperator};

/// Rows `yᵢ ~ N(θ, σ²I)`, so `log L = −Σᵢ‖yᵢ − θ‖² / (2σ²)`.
#[derive(Clone, Debug)]
pub struct GaussianMeanLikelihood {
    n: usize,
    mean: DVector<f64>,
    /// `Σᵢ‖yᵢ − ȳ‖²`.
    scatter: f64,
    sigma: f64,
}

impl GaussianMeanLikelihood {
    pub fn new(y: &DMatrix<f64>, sigma: f64) -> Result<Self> {
        if y.nrows() == 0 {
            return Err(Error::InvalidInput("need at least one observation".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        linalg::ensure_finite_matrix(y, "observations")?;
        let n = y.nrows();
        let mean = y.row_mean().transpose();
        let scatter = y.row_iter().map(|r| (r.transpose() - &mean).norm_squared()).sum();
        Ok(Self { n, mean, scatter, sigma })
    }

    pub fn sample_mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Likelihood for GaussianMeanLikelihood {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_lik(&self, theta: &DVector<f64>) -> f64 {
        -(self.n as f64 * (theta - &self.mean).norm_squared() + self.scatter) / (2.0 * self.sigma * self.sigma)
    }

    fn grad_log_lik(&self, theta: &DVector<f64>) -> DVector<f64> {
        (&self.mean - theta) * (self.n as f64 / (self.sigma * self.sigma))
    }
}

/// `y ~ N(Xθ, σ²I)`.
#[derive(Clone, Debug)]
pub struct LinearRegressionLikelihood {
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma: f64,
}

impl LinearRegressionLikelihood {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, sigma: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Shape(format!("design has {} rows, response has {}", x.nrows(), y.len())));
        }
        if y.is_empty() {
            return Err(Error::InvalidInput("need at least one observation".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        linalg::ensure_finite_matrix(&x, "design")?;
        linalg::ensure_finite(&y, "response")?;
        Ok(Self { x, y, sigma })
    }
}

impl Likelihood for LinearRegressionLikelihood {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn log_lik(&self, theta: &DVector<f64>) -> f64 {
        -(&self.y - &self.x * theta).norm_squared() / (2.0 * self.sigma * self.sigma)
    }

    fn grad_log_lik(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.x.tr_mul(&(&self.y - &self.x * theta)) / (self.sigma * self.sigma)
    }
}

/// Prior standard deviation of `β` in the set-expansion mean model.
pub const SET_EXPANSION_PRIOR_SD: f64 = 3.0;

/// Gaussian mean with known `σ`, prior `θ = prox_{λ dist_C}(β)`,
/// `β ~ N(0, 3²I)`.
pub fn make_gaussian_mean_model(y: &DMatrix<f64>, sigma: f64, set: ConvexSet, lambda: f64) -> Result<Model> {
    let lik = GaussianMeanLikelihood::new(y, sigma)?;
    let p = lik.dim();
    if set.dim() != p {
        return Err(Error::Shape(format!("observations have {p} columns, set lives in dimension {}", set.dim())));
    }
    let op = ProxOperator::set_expansion(set, lambda)?;
    Model::new(
        "gaussian_mean",
        Arc::new(lik),
        vec![ProxBlock::new("theta", 0, p, Some(op)).calibrated()],
        vec![PriorBlock::isotropic(p, SET_EXPANSION_PRIOR_SD)],
    )
}

/// Linear regression with a soft-threshold prior and `β ~ N(0, I)`.
pub fn make_sparse_regression_model(x: DMatrix<f64>, y: DVector<f64>, sigma: f64, lambda: f64) -> Result<Model> {
    let lik = LinearRegressionLikelihood::new(x, y, sigma)?;
    let p = lik.dim();
    Model::new(
        "sparse_regression",
        Arc::new(lik),
        vec![ProxBlock::new("theta", 0, p, Some(ProxOperator::soft_threshold(lambda)?)).calibrated()],
        vec![PriorBlock::standard_normal(p)],
    )
}

/// Gaussian mean restricted to `{Aᵀθ = b}` by projection, `β ~ N(0, I)`.
pub fn make_affine_mean_model(y: &DMatrix<f64>, sigma: f64, constraint: AffineConstraint) -> Result<Model> {
    let lik = GaussianMeanLikelihood::new(y, sigma)?;
    let p = lik.dim();
    if constraint.dim() != p {
        return Err(Error::Shape(format!(
            "observations have {p} columns, constraint acts on {}",
            constraint.dim()
        )));
    }
    Model::new(
        "affine_mean",
        Arc::new(lik),
        vec![ProxBlock::new("theta", 0, p, Some(ProxOperator::affine(constraint)))],
        vec![PriorBlock::standard_normal(p)],
    )
}
