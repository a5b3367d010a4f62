//! Proximal maps with closed-form solutions, and their Jacobians.

use nalgebra::{DMatrix, DVector};

use super::sets::{AffineConstraint, ConvexSet};
use crate::error::{Error, Result};
use crate::linalg::{self, soft};

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )))
    }
}

/// Elementwise `sign(β) max(|β| - λ, 0)`, the prox of `λ‖·‖₁`.
pub fn prox_soft_threshold(beta: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    linalg::ensure_finite(beta, "beta")?;
    Ok(beta.map(|b| soft(b, lambda)))
}

pub fn soft_threshold_jacobian(beta: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal(&beta.map(|b| if b.abs() > lambda { 1.0 } else { 0.0 }))
}

/// `β / (1 + λ)`, the prox of `λ‖·‖²/2`.
pub fn prox_ridge(beta: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    linalg::ensure_finite(beta, "beta")?;
    Ok(beta / (1.0 + lambda))
}

/// Euclidean projection onto `{θ : Aᵀθ = b}`; independent of λ.
pub fn prox_affine_projection(beta: &DVector<f64>, c: &AffineConstraint) -> Result<DVector<f64>> {
    if beta.len() != c.dim() {
        return Err(Error::Shape(format!(
            "beta has length {}, constraint acts on dimension {}",
            beta.len(),
            c.dim()
        )));
    }
    linalg::ensure_finite(beta, "beta")?;
    Ok(c.project(beta))
}

/// Singular-value soft thresholding, the prox of `λ‖·‖_*` for a general
/// rectangular matrix.
pub fn prox_nuclear(b: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    linalg::ensure_finite_matrix(b, "matrix")?;
    if lambda == 0.0 {
        return Ok(b.clone());
    }
    let rr = linalg::rank_revealing_svd(b, 0.0)?;
    let mut out = DMatrix::zeros(b.nrows(), b.ncols());
    for (k, s) in rr.sigma.iter().enumerate() {
        let shrunk = s - lambda;
        if shrunk > 0.0 {
            out += rr.u.column(k) * rr.v.column(k).transpose() * shrunk;
        }
    }
    Ok(out)
}

/// Row-wise group shrinkage, the prox of `λ Σᵢ ‖Bᵢ‖₂`.
pub fn prox_group_row(b: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    linalg::ensure_finite_matrix(b, "matrix")?;
    let mut out = b.clone();
    for mut row in out.row_iter_mut() {
        let n = row.norm();
        if n <= lambda {
            row.fill(0.0);
        } else {
            row.scale_mut(1.0 - lambda / n);
        }
    }
    Ok(out)
}

/// Jacobian of [`prox_group_row`] with respect to the row-major flattening.
pub fn group_row_jacobian(b: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let (m, n) = b.shape();
    let mut j = DMatrix::zeros(m * n, m * n);
    for i in 0..m {
        let row = b.row(i).transpose();
        let norm = row.norm();
        if norm <= lambda {
            continue;
        }
        let block = DMatrix::identity(n, n) * (1.0 - lambda / norm)
            + &row * row.transpose() * (lambda / norm.powi(3));
        j.view_mut((i * n, i * n), (n, n)).copy_from(&block);
    }
    j
}

/// Prox of `λ dist_C`: points within λ of `C` land on `C`, the rest move λ
/// closer along the projection direction.
pub fn prox_set_expansion(beta: &DVector<f64>, set: &ConvexSet, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    linalg::ensure_finite(beta, "beta")?;
    if beta.len() != set.dim() {
        return Err(Error::Shape(format!(
            "beta has length {}, set lives in dimension {}",
            beta.len(),
            set.dim()
        )));
    }
    let p = set.project(beta);
    let d = (beta - &p).norm();
    if d < lambda {
        Ok(p)
    } else if d == 0.0 {
        Ok(beta.clone())
    } else {
        Ok(beta + (&p - beta) * (lambda / d))
    }
}

/// Jacobian of [`prox_set_expansion`]; one-sided at `dist_C(β) = λ`.
pub fn set_expansion_jacobian(beta: &DVector<f64>, set: &ConvexSet, lambda: f64) -> DMatrix<f64> {
    let n = beta.len();
    let jp = set.projection_jacobian(beta);
    let p = set.project(beta);
    let r = beta - &p;
    let d = r.norm();
    if d < lambda {
        return jp;
    }
    if d == 0.0 {
        return DMatrix::identity(n, n);
    }
    let u = r / d;
    let eye = DMatrix::identity(n, n);
    &eye - (&eye - &u * u.transpose()) * (&eye - jp) * (lambda / d)
}
