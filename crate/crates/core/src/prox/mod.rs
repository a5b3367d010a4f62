//! Proximal operators `prox_{λg}(β) = argmin_z λ g(z) + ½‖z − β‖²`.
//!
//! [`ProxOperator`] bundles a penalty kind with its scale and acts on flat
//! vectors; matrix-valued kinds use the row-major flattening.

mod closed_form;
pub mod sets;

pub use closed_form::{
    group_row_jacobian, prox_affine_projection, prox_group_row, prox_nuclear, prox_ridge,
    prox_set_expansion, prox_soft_threshold, set_expansion_jacobian, soft_threshold_jacobian,
};
pub use sets::{AffineConstraint, ConvexSet, ConvexSetSpec};

use nalgebra::{DMatrix, DVector};

use crate::admm::{
    build_flow_constraint_matrix, n_edges, prox_fused_l1_detailed, prox_flow_detailed, AdmmConfig,
    FlowNetwork,
};
use crate::error::{Error, Result};
use crate::linalg::{self, from_row_major, to_row_major, PINV_REL_TOL};

/// Value returned by [`prox_objective`] at points outside a constraint set.
pub const INFEASIBLE_OBJECTIVE: f64 = 1e300;

#[derive(Clone, Debug)]
pub enum ProxKind {
    /// `g = ‖·‖₁`.
    SoftThreshold,
    /// `g = ½‖·‖²`.
    Ridge,
    /// Indicator of `{Aᵀθ = b}`; λ plays no role.
    AffineProjection(AffineConstraint),
    /// Nuclear norm of a `rows x cols` matrix.
    Nuclear { rows: usize, cols: usize },
    /// Sum of row norms of a `rows x cols` matrix.
    GroupRow { rows: usize, cols: usize },
    /// `g = dist_C`.
    SetExpansion(ConvexSet),
    /// `g = ‖D·‖₁`.
    FusedL1 { d: DMatrix<f64>, admm: AdmmConfig },
    /// `λ‖z‖₁ + λ₂‖Cz‖₁` on lower-triangular edge flows.
    Flow {
        n_nodes: usize,
        lambda2: f64,
        admm: AdmmConfig,
    },
}

/// A proximal map with its scale.
#[derive(Clone, Debug)]
pub struct ProxOperator {
    kind: ProxKind,
    lambda: f64,
}

fn check_scale(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

impl ProxOperator {
    pub fn new(kind: ProxKind, lambda: f64) -> Result<Self> {
        check_scale("lambda", lambda)?;
        match &kind {
            ProxKind::Flow { n_nodes, lambda2, admm } => {
                check_scale("lambda2", *lambda2)?;
                admm.validate()?;
                if *n_nodes < 2 {
                    return Err(Error::InvalidInput("a flow network needs at least 2 nodes".into()));
                }
            }
            ProxKind::FusedL1 { d, admm } => {
                admm.validate()?;
                linalg::ensure_finite_matrix(d, "difference matrix")?;
            }
            _ => {}
        }
        Ok(Self { kind, lambda })
    }

    pub fn soft_threshold(lambda: f64) -> Result<Self> {
        Self::new(ProxKind::SoftThreshold, lambda)
    }

    pub fn ridge(lambda: f64) -> Result<Self> {
        Self::new(ProxKind::Ridge, lambda)
    }

    pub fn affine(c: AffineConstraint) -> Self {
        Self {
            kind: ProxKind::AffineProjection(c),
            lambda: 0.0,
        }
    }

    pub fn nuclear(rows: usize, cols: usize, lambda: f64) -> Result<Self> {
        Self::new(ProxKind::Nuclear { rows, cols }, lambda)
    }

    pub fn group_row(rows: usize, cols: usize, lambda: f64) -> Result<Self> {
        Self::new(ProxKind::GroupRow { rows, cols }, lambda)
    }

    pub fn set_expansion(set: ConvexSet, lambda: f64) -> Result<Self> {
        Self::new(ProxKind::SetExpansion(set), lambda)
    }

    pub fn fused_l1(d: DMatrix<f64>, lambda: f64, admm: AdmmConfig) -> Result<Self> {
        Self::new(ProxKind::FusedL1 { d, admm }, lambda)
    }

    /// Flow prox with edge scale `lambda1` and net-flow scale `lambda2`.
    pub fn flow(n_nodes: usize, lambda1: f64, lambda2: f64, admm: AdmmConfig) -> Result<Self> {
        Self::new(
            ProxKind::Flow {
                n_nodes,
                lambda2,
                admm,
            },
            lambda1,
        )
    }

    pub fn kind(&self) -> &ProxKind {
        &self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ProxKind::SoftThreshold => "soft_threshold",
            ProxKind::Ridge => "ridge",
            ProxKind::AffineProjection(_) => "affine_projection",
            ProxKind::Nuclear { .. } => "nuclear",
            ProxKind::GroupRow { .. } => "group_row",
            ProxKind::SetExpansion(_) => "set_expansion",
            ProxKind::FusedL1 { .. } => "fused_l1",
            ProxKind::Flow { .. } => "flow",
        }
    }

    /// Input dimension, or `None` for elementwise kinds that accept any length.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            ProxKind::SoftThreshold | ProxKind::Ridge => None,
            ProxKind::AffineProjection(c) => Some(c.dim()),
            ProxKind::Nuclear { rows, cols } | ProxKind::GroupRow { rows, cols } => Some(rows * cols),
            ProxKind::SetExpansion(s) => Some(s.dim()),
            ProxKind::FusedL1 { d, .. } => Some(d.ncols()),
            ProxKind::Flow { n_nodes, .. } => Some(n_edges(*n_nodes)),
        }
    }

    /// Same operator at a different primary scale (λ₁ for flows).
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.kind.clone(), lambda)
    }

    /// Multiplies every scale by `factor`, including λ₂ of the flow prox.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        check_scale("scale factor", factor)?;
        let kind = match &self.kind {
            ProxKind::Flow {
                n_nodes,
                lambda2,
                admm,
            } => ProxKind::Flow {
                n_nodes: *n_nodes,
                lambda2: lambda2 * factor,
                admm: admm.clone(),
            },
            k => k.clone(),
        };
        Self::new(kind, self.lambda * factor)
    }

    fn check_dim(&self, beta: &DVector<f64>) -> Result<()> {
        match self.dim() {
            Some(p) if p != beta.len() => Err(Error::Shape(format!(
                "{} operator expects length {p}, got {}",
                self.name(),
                beta.len()
            ))),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(beta)?;
        let l = self.lambda;
        match &self.kind {
            ProxKind::SoftThreshold => prox_soft_threshold(beta, l),
            ProxKind::Ridge => prox_ridge(beta, l),
            ProxKind::AffineProjection(c) => prox_affine_projection(beta, c),
            ProxKind::Nuclear { rows, cols } => Ok(to_row_major(&prox_nuclear(
                &from_row_major(beta, *rows, *cols),
                l,
            )?)),
            ProxKind::GroupRow { rows, cols } => Ok(to_row_major(&prox_group_row(
                &from_row_major(beta, *rows, *cols),
                l,
            )?)),
            ProxKind::SetExpansion(set) => prox_set_expansion(beta, set, l),
            ProxKind::FusedL1 { d, admm } => Ok(prox_fused_l1_detailed(beta, d, l, admm)?.z),
            ProxKind::Flow { lambda2, admm, .. } => {
                Ok(prox_flow_detailed(beta, l, *lambda2, admm)?.0.lower)
            }
        }
    }

    /// The prox value together with its Jacobian when one is available in
    /// closed form (or from the ADMM active set). `None` means callers must
    /// estimate it.
    pub fn evaluate_with_jacobian(&self, beta: &DVector<f64>) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
        self.check_dim(beta)?;
        let l = self.lambda;
        Ok(match &self.kind {
            ProxKind::SoftThreshold => (prox_soft_threshold(beta, l)?, Some(soft_threshold_jacobian(beta, l))),
            ProxKind::Ridge => {
                let p = beta.len();
                (prox_ridge(beta, l)?, Some(DMatrix::identity(p, p) / (1.0 + l)))
            }
            ProxKind::AffineProjection(c) => (prox_affine_projection(beta, c)?, Some(c.projector().clone())),
            ProxKind::Nuclear { .. } => (self.evaluate(beta)?, None),
            ProxKind::GroupRow { rows, cols } => {
                let b = from_row_major(beta, *rows, *cols);
                (to_row_major(&prox_group_row(&b, l)?), Some(group_row_jacobian(&b, l)))
            }
            ProxKind::SetExpansion(set) => {
                (prox_set_expansion(beta, set, l)?, Some(set_expansion_jacobian(beta, set, l)))
            }
            ProxKind::FusedL1 { d, admm } => {
                let out = prox_fused_l1_detailed(beta, d, l, admm)?;
                (out.z, out.jacobian)
            }
            ProxKind::Flow { lambda2, admm, .. } => {
                let (net, out) = prox_flow_detailed(beta, l, *lambda2, admm)?;
                (net.lower, out.jacobian)
            }
        })
    }

    /// Whether [`evaluate_with_jacobian`](Self::evaluate_with_jacobian) can
    /// return an exact Jacobian for this kind.
    pub fn has_analytic_jacobian(&self) -> bool {
        !matches!(self.kind, ProxKind::Nuclear { .. })
    }

    /// Full flow network (with its sparse diagonal) for flow operators.
    pub fn evaluate_flow(&self, beta: &DVector<f64>) -> Result<FlowNetwork> {
        match &self.kind {
            ProxKind::Flow { lambda2, admm, .. } => Ok(prox_flow_detailed(beta, self.lambda, *lambda2, admm)?.0),
            _ => Err(Error::InvalidInput(format!("{} is not a flow operator", self.name()))),
        }
    }

    /// `λ g(z)`, or [`INFEASIBLE_OBJECTIVE`] when `z` violates a constraint-type `g`.
    pub fn penalty(&self, z: &DVector<f64>) -> f64 {
        let l = self.lambda;
        match &self.kind {
            ProxKind::SoftThreshold => l * z.iter().map(|x| x.abs()).sum::<f64>(),
            ProxKind::Ridge => 0.5 * l * z.norm_squared(),
            ProxKind::AffineProjection(c) => {
                if c.contains(z) {
                    0.0
                } else {
                    INFEASIBLE_OBJECTIVE
                }
            }
            ProxKind::Nuclear { rows, cols } => {
                let m = from_row_major(z, *rows, *cols);
                l * m.singular_values().sum()
            }
            ProxKind::GroupRow { rows, cols } => {
                let m = from_row_major(z, *rows, *cols);
                l * m.row_iter().map(|r| r.norm()).sum::<f64>()
            }
            ProxKind::SetExpansion(set) => l * set.distance(z),
            ProxKind::FusedL1 { d, .. } => l * (d * z).iter().map(|x| x.abs()).sum::<f64>(),
            ProxKind::Flow { n_nodes, lambda2, .. } => {
                let c = build_flow_constraint_matrix(*n_nodes);
                l * z.iter().map(|x| x.abs()).sum::<f64>()
                    + lambda2 * (c * z).iter().map(|x| x.abs()).sum::<f64>()
            }
        }
    }

    /// Image of `β` as every scale goes to infinity.
    pub fn limit_point(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(beta)?;
        match &self.kind {
            ProxKind::AffineProjection(_) => Err(Error::DegenerateOperator(
                "affine projection does not depend on lambda".into(),
            )),
            ProxKind::SetExpansion(set) => Ok(set.project(beta)),
            ProxKind::FusedL1 { d, .. } => {
                let p = linalg::null_space_projector(d, PINV_REL_TOL)?;
                Ok(p * beta)
            }
            ProxKind::SoftThreshold
            | ProxKind::Ridge
            | ProxKind::Nuclear { .. }
            | ProxKind::GroupRow { .. }
            | ProxKind::Flow { .. } => Ok(DVector::zeros(beta.len())),
        }
    }
}

/// `λ g(z) + ½‖z − β‖²`, with [`INFEASIBLE_OBJECTIVE`] for infeasible `z`.
pub fn prox_objective(z: &DVector<f64>, beta: &DVector<f64>, op: &ProxOperator) -> f64 {
    let pen = op.penalty(z);
    if pen >= INFEASIBLE_OBJECTIVE {
        return INFEASIBLE_OBJECTIVE;
    }
    pen + 0.5 * (z - beta).norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_direct_evaluation() {
        let op = ProxOperator::soft_threshold(1.0).unwrap();
        let z = DVector::from_vec(vec![1.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 0.0]);
        assert_eq!(prox_objective(&z, &b, &op), 1.5);
        assert_eq!(prox_objective(&DVector::zeros(2), &DVector::zeros(2), &op), 0.0);
    }

    #[test]
    fn infeasible_point_gets_sentinel() {
        let op = ProxOperator::affine(AffineConstraint::hyperplane(&[1.0, 1.0], 1.0).unwrap());
        let z = DVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(prox_objective(&z, &z, &op), INFEASIBLE_OBJECTIVE);
    }

    #[test]
    fn affine_limit_is_degenerate() {
        let op = ProxOperator::affine(AffineConstraint::hyperplane(&[1.0, 1.0], 1.0).unwrap());
        assert!(matches!(
            op.limit_point(&DVector::zeros(2)),
            Err(Error::DegenerateOperator(_))
        ));
    }

    #[test]
    fn scaled_flow_scales_both_penalties() {
        let op = ProxOperator::flow(4, 0.2, 0.5, AdmmConfig::default()).unwrap();
        let s = op.scaled(3.0).unwrap();
        assert!((s.lambda() - 0.6).abs() < 1e-15);
        match s.kind() {
            ProxKind::Flow { lambda2, .. } => assert!((lambda2 - 1.5).abs() < 1e-15),
            _ => unreachable!(),
        }
    }

    #[test]
    fn dimension_checked() {
        let op = ProxOperator::group_row(2, 3, 1.0).unwrap();
        assert!(matches!(op.evaluate(&DVector::zeros(5)), Err(Error::Shape(_))));
    }

    #[test]
    fn fused_limit_is_mean() {
        let op = ProxOperator::fused_l1(crate::admm::first_difference_matrix(3), 1.0, AdmmConfig::default()).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0, 6.0]);
        let lim = op.limit_point(&b).unwrap();
        assert!((lim - DVector::from_element(3, 3.0)).amax() < 1e-12);
    }
}
