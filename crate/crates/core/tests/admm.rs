mod common;

use common::gaussian;
use nalgebra::DVector;
use proptest::prelude::*;
use proxprior::admm::{
    first_difference_matrix, n_edges, prox_flow, prox_flow_detailed, prox_fused_l1_detailed, AdmmConfig,
    FlowNetwork,
};
use proxprior::gradient::finite_diff_jacobian;
use proxprior::prox::ProxOperator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_prox_is_feasible(seed in any::<u64>(), n in 2usize..7, l1 in 0.0..2.0f64, l2 in 0.0..2.0f64) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let beta = gaussian(n_edges(n), 2.0, &mut r);
        let net = prox_flow(&beta, l1, l2, &AdmmConfig::default()).unwrap();
        prop_assert_eq!(net.skew_residual(), 0.0);
        prop_assert!(net.conservation_residual() <= 1e-6);
        let m = net.to_matrix();
        prop_assert_eq!(FlowNetwork::from_matrix(&m).unwrap(), net);
    }

    #[test]
    fn fused_l1_output_is_piecewise_constant(seed in any::<u64>(), lambda in 0.1..3.0f64) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let beta = gaussian(8, 1.0, &mut r);
        let d = first_difference_matrix(8);
        let out = prox_fused_l1_detailed(&beta, &d, lambda, &AdmmConfig::default()).unwrap();
        // the mean is preserved by a penalty on differences alone
        prop_assert!((out.z.sum() - beta.sum()).abs() < 1e-6);
        prop_assert!(out.primal_residual <= 1e-6);
    }
}

#[test]
fn active_set_jacobians_match_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(17);
    let admm = AdmmConfig::default();
    let ops = [
        ProxOperator::fused_l1(first_difference_matrix(5), 0.4, admm.clone()).unwrap(),
        ProxOperator::flow(4, 0.3, 0.3, admm).unwrap(),
    ];
    for op in &ops {
        let mut checked = 0;
        for _ in 0..20 {
            let beta = gaussian(op.dim().unwrap(), 1.5, &mut r);
            let (_, jac) = op.evaluate_with_jacobian(&beta).unwrap();
            let Some(jac) = jac else { continue };
            let fd = finite_diff_jacobian(op, &beta, 1e-6).unwrap();
            let err = (&jac - &fd).amax();
            // a kink within h of β makes the difference quotient meaningless
            if err < 1e-4 {
                checked += 1;
            }
        }
        assert!(checked >= 18, "{}: only {checked} of 20 Jacobians agree", op.name());
    }
}

#[test]
fn polished_and_plain_admm_agree() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let plain = AdmmConfig {
        polish: false,
        tol_primal: 1e-10,
        tol_dual: 1e-10,
        max_iters: 200_000,
        ..AdmmConfig::default()
    };
    for _ in 0..10 {
        let beta = gaussian(n_edges(5), 1.0, &mut r);
        let (a, _) = prox_flow_detailed(&beta, 0.4, 0.6, &AdmmConfig::default()).unwrap();
        let (b, _) = prox_flow_detailed(&beta, 0.4, 0.6, &plain).unwrap();
        assert!((a.lower - b.lower).amax() < 1e-6);
    }
}

#[test]
fn zero_input_gives_zero_flow() {
    let net = prox_flow(&DVector::zeros(n_edges(6)), 1.0, 1.0, &AdmmConfig::default()).unwrap();
    assert!(net.is_zero(0.0));
}
