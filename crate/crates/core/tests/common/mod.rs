#![allow(dead_code)]

use nalgebra::DVector;
use proxprior::admm::{first_difference_matrix, AdmmConfig};
use proxprior::prox::{AffineConstraint, ConvexSet, ProxOperator};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// One operator of every kind at scale `lambda`, with a name.
pub fn operator_zoo(lambda: f64) -> Vec<(&'static str, ProxOperator)> {
    let plane = AffineConstraint::hyperplane(&[1.0, 1.0, 1.0], 1.0).unwrap();
    vec![
        ("soft_threshold", ProxOperator::soft_threshold(lambda).unwrap()),
        ("ridge", ProxOperator::ridge(lambda).unwrap()),
        ("affine", ProxOperator::affine(plane.clone())),
        ("nuclear", ProxOperator::nuclear(3, 2, lambda).unwrap()),
        ("group_row", ProxOperator::group_row(3, 2, lambda).unwrap()),
        ("set_expansion", ProxOperator::set_expansion(ConvexSet::Affine(plane), lambda).unwrap()),
        (
            "fused_l1",
            ProxOperator::fused_l1(first_difference_matrix(4), lambda, AdmmConfig::default()).unwrap(),
        ),
        ("flow", ProxOperator::flow(4, lambda, lambda, AdmmConfig::default()).unwrap()),
    ]
}

/// Input length of an operator in the zoo.
pub fn zoo_dim(op: &ProxOperator) -> usize {
    op.dim().unwrap_or(3)
}

pub fn gaussian<R: Rng>(p: usize, sd: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(p, |_, _| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
}

/// Whether the operator runs an iterative solver.
pub fn is_admm(name: &str) -> bool {
    matches!(name, "fused_l1" | "flow")
}
