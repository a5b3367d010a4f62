//! Convex sets with exact Euclidean projectors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, PINV_REL_TOL};

/// Feasibility tolerance for `b ∈ Col(Aᵀ)`.
pub const AFFINE_FEASIBILITY_TOL: f64 = 1e-8;

/// The affine set `{θ : Aᵀθ = b}` with `A` of shape `p x m`.
///
/// `AᵀA` may be rank deficient; its pseudo-inverse drops singular values below
/// `1e-10 σ_max`.
#[derive(Clone, Debug)]
pub struct AffineConstraint {
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// `A (AᵀA)⁻`, `p x m`.
    a_ata_pinv: DMatrix<f64>,
    /// `P_{A⊥} = I - A (AᵀA)⁻ Aᵀ`.
    projector: DMatrix<f64>,
}

impl AffineConstraint {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.ncols() != b.len() {
            return Err(Error::Shape(format!(
                "constraint matrix has {} columns but offset has length {}",
                a.ncols(),
                b.len()
            )));
        }
        linalg::ensure_finite_matrix(&a, "constraint matrix")?;
        linalg::ensure_finite(&b, "constraint offset")?;
        let p = a.nrows();
        let ata_pinv = linalg::pinv(&(a.transpose() * &a), PINV_REL_TOL)?;
        let a_ata_pinv = &a * ata_pinv;
        let projector = DMatrix::identity(p, p) - &a_ata_pinv * a.transpose();
        // least-squares feasibility: the minimum-norm point must satisfy the system
        let b_star = &a_ata_pinv * &b;
        let residual = (a.transpose() * b_star - &b).norm();
        if residual > AFFINE_FEASIBILITY_TOL * b.norm().max(1.0) {
            return Err(Error::InfeasibleConstraint { residual });
        }
        Ok(Self {
            a,
            b,
            a_ata_pinv,
            projector,
        })
    }

    /// The hyperplane `normalᵀθ = offset`.
    pub fn hyperplane(normal: &[f64], offset: f64) -> Result<Self> {
        if normal.iter().all(|x| *x == 0.0) {
            return Err(Error::InvalidInput("hyperplane normal is zero".into()));
        }
        Self::new(
            DMatrix::from_column_slice(normal.len(), 1, normal),
            DVector::from_element(1, offset),
        )
    }

    /// No constraints at all: the whole space `ℝ^p`.
    pub fn unconstrained(p: usize) -> Self {
        Self::new(DMatrix::zeros(p, 0), DVector::zeros(0)).expect("empty constraint is feasible")
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// `P_{A⊥}`, the constant Jacobian of the projection.
    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projector
    }

    pub fn project(&self, beta: &DVector<f64>) -> DVector<f64> {
        if self.a.ncols() == 0 {
            return beta.clone();
        }
        beta - &self.a_ata_pinv * (self.a.transpose() * beta - &self.b)
    }

    /// `‖Aᵀθ - b‖₂`.
    pub fn residual(&self, theta: &DVector<f64>) -> f64 {
        if self.a.ncols() == 0 {
            return 0.0;
        }
        (self.a.transpose() * theta - &self.b).norm()
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        self.residual(theta) <= AFFINE_FEASIBILITY_TOL * self.b.norm().max(1.0)
    }
}

/// Serializable description of a convex set, used by configs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConvexSetSpec {
    Hyperplane { normal: Vec<f64>, offset: f64 },
    Point { point: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    NonnegativeOrthant { dim: usize },
    Whole { dim: usize },
}

impl ConvexSetSpec {
    pub fn build(&self) -> Result<ConvexSet> {
        Ok(match self {
            ConvexSetSpec::Hyperplane { normal, offset } => {
                ConvexSet::Affine(AffineConstraint::hyperplane(normal, *offset)?)
            }
            ConvexSetSpec::Point { point } => ConvexSet::Point(DVector::from_vec(point.clone())),
            ConvexSetSpec::Ball { center, radius } => {
                if !(*radius >= 0.0) {
                    return Err(Error::InvalidInput("ball radius must be nonnegative".into()));
                }
                ConvexSet::Ball {
                    center: DVector::from_vec(center.clone()),
                    radius: *radius,
                }
            }
            ConvexSetSpec::NonnegativeOrthant { dim } => ConvexSet::NonnegativeOrthant(*dim),
            ConvexSetSpec::Whole { dim } => ConvexSet::Whole(*dim),
        })
    }
}

/// A closed convex set with an exact Euclidean projector.
#[derive(Clone, Debug)]
pub enum ConvexSet {
    Affine(AffineConstraint),
    Point(DVector<f64>),
    Ball { center: DVector<f64>, radius: f64 },
    NonnegativeOrthant(usize),
    Whole(usize),
}

impl ConvexSet {
    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Affine(c) => c.dim(),
            ConvexSet::Point(p) => p.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::NonnegativeOrthant(d) | ConvexSet::Whole(d) => *d,
        }
    }

    pub fn project(&self, beta: &DVector<f64>) -> DVector<f64> {
        match self {
            ConvexSet::Affine(c) => c.project(beta),
            ConvexSet::Point(p) => p.clone(),
            ConvexSet::Ball { center, radius } => {
                let diff = beta - center;
                let d = diff.norm();
                if d <= *radius {
                    beta.clone()
                } else {
                    center + diff * (*radius / d)
                }
            }
            ConvexSet::NonnegativeOrthant(_) => beta.map(|x| x.max(0.0)),
            ConvexSet::Whole(_) => beta.clone(),
        }
    }

    pub fn distance(&self, beta: &DVector<f64>) -> f64 {
        (beta - self.project(beta)).norm()
    }

    /// Jacobian of the projector at `beta` (one-sided on the boundary).
    pub fn projection_jacobian(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let p = self.dim();
        match self {
            ConvexSet::Affine(c) => c.projector().clone(),
            ConvexSet::Point(_) => DMatrix::zeros(p, p),
            ConvexSet::Ball { center, radius } => {
                let diff = beta - center;
                let d = diff.norm();
                if d <= *radius {
                    DMatrix::identity(p, p)
                } else {
                    let u = diff / d;
                    (DMatrix::identity(p, p) - &u * u.transpose()) * (*radius / d)
                }
            }
            ConvexSet::NonnegativeOrthant(_) => {
                DMatrix::from_diagonal(&beta.map(|x| if x > 0.0 { 1.0 } else { 0.0 }))
            }
            ConvexSet::Whole(_) => DMatrix::identity(p, p),
        }
    }
}
