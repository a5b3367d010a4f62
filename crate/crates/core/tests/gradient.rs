mod common;

use common::gaussian;
use nalgebra::{DMatrix, DVector};
use proxprior::gradient::{spsa_jacobian, PerturbationDesign, SpsaConfig};
use proxprior::models::{
    make_affine_mean_model, make_flow_factor_model, make_gaussian_mean_model, make_sparse_regression_model,
    synthetic_flow_data, FlowFactorOptions, Model, SyntheticFlowSpec,
};
use proxprior::prox::{AffineConstraint, ConvexSet, ProxOperator};
use proxprior::rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn central_difference(model: &Model, beta: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(beta.len(), |j, _| {
        let mut up = beta.clone();
        up[j] += h;
        let mut down = beta.clone();
        down[j] -= h;
        (model.log_posterior(&up).unwrap() - model.log_posterior(&down).unwrap()) / (2.0 * h)
    })
}

fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Counts points where the analytic gradient agrees with central
/// differences; a kink within `h` spoils the difference quotient.
fn agreeing_points(model: &Model, points: &[DVector<f64>]) -> usize {
    points
        .iter()
        .filter(|b| {
            let (_, g) = model.log_posterior_and_grad(b, 0).unwrap();
            relative_error(&g, &central_difference(model, b, 1e-6)) < 1e-4
        })
        .count()
}

#[test]
fn closed_form_models_have_exact_gradients() {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let y = DMatrix::from_fn(15, 3, |_, _| gaussian(1, 2.0, &mut r)[0]);
    let x = DMatrix::from_fn(30, 4, |_, _| gaussian(1, 1.0, &mut r)[0]);
    let yr = gaussian(30, 1.0, &mut r);
    let plane = AffineConstraint::hyperplane(&[1.0, 1.0, 1.0], 1.0).unwrap();
    let models = [
        make_sparse_regression_model(x, yr, 1.0, 0.7).unwrap(),
        make_gaussian_mean_model(&y, 2.0, ConvexSet::Affine(plane.clone()), 1.5).unwrap(),
        make_affine_mean_model(&y, 2.0, plane).unwrap(),
    ];
    for m in &models {
        let points: Vec<_> = (0..20).map(|_| gaussian(m.dim(), 2.0, &mut r)).collect();
        let ok = agreeing_points(m, &points);
        assert!(ok >= 19, "{}: {ok} of 20 points agree", m.name);
    }
}

#[test]
fn flow_factor_gradient_matches_central_differences() {
    let spec = SyntheticFlowSpec {
        n_nodes: 4,
        t: 3,
        n_factors: 1,
        min_cycle: 3,
        max_cycle: 3,
        ..SyntheticFlowSpec::default()
    };
    let syn = synthetic_flow_data(&spec, &mut rng::stream(2, rng::STREAM_DATA)).unwrap();
    let opts = FlowFactorOptions {
        d: 2,
        lambda1: 0.2,
        lambda2: 0.2,
        lambda_load: 0.5,
        ..FlowFactorOptions::default()
    };
    let model = make_flow_factor_model(&syn.data, &opts).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let points: Vec<_> = (0..20).map(|_| model.sample_prior(&mut r)).collect();
    let ok = agreeing_points(&model, &points);
    assert!(ok >= 18, "{ok} of 20 points agree");
}

#[test]
fn spsa_recovers_the_affine_projector() {
    let plane = AffineConstraint::hyperplane(&[1.0, -2.0, 0.5, 1.0], 0.3).unwrap();
    let op = ProxOperator::affine(plane.clone());
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let beta = gaussian(4, 1.0, &mut r);
    let averaged = |cfg: SpsaConfig, n: u64| {
        let mut avg = DMatrix::zeros(4, 4);
        for s in 0..n {
            avg += spsa_jacobian(&op, &beta, &cfg.with_seed(s)).unwrap();
        }
        avg / n as f64
    };
    // orthogonal Hadamard columns cancel the cross-terms of a linear map
    let hadamard = averaged(SpsaConfig { m: 8, ..SpsaConfig::default() }, 5);
    assert!((hadamard - plane.projector()).amax() < 1e-4);
    // independent signs only cancel them on average
    let rademacher = SpsaConfig {
        m: 7,
        design: PerturbationDesign::Rademacher,
        ..SpsaConfig::default()
    };
    let err = (averaged(rademacher, 400) - plane.projector()).amax();
    assert!(err < 0.15, "Rademacher average off by {err}");
}
