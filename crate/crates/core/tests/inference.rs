mod common;

use common::gaussian;
use nalgebra::DVector;
use proptest::prelude::*;
use proxprior::inference::{
    balanced_lambda, bayes_factor_set_expansion, covariance_contraction, factor_count_posterior, quantile_sorted,
    summarize, BayesFactorFlag,
};
use proxprior::models::FlowLayout;
use proxprior::prox::{AffineConstraint, ConvexSet};
use proxprior::sampler::Chain;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn plane() -> ConvexSet {
    ConvexSet::Affine(AffineConstraint::hyperplane(&[1.0, 1.0, 1.0], 1.0).unwrap())
}

/// A chain whose draws sit at distance `d` from the plane, one per entry.
fn chain_at_distances(ds: &[f64]) -> Chain {
    let n = DVector::from_vec(vec![1.0, 1.0, 1.0]).normalize();
    let base = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let beta: Vec<_> = ds.iter().map(|d| &base + &n * *d).collect();
    Chain::from_draws(beta.clone(), beta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bayes_factor_is_posterior_over_prior_odds(
        n_in in 1usize..50,
        n_out in 1usize..50,
        seed in any::<u64>(),
    ) {
        let ds: Vec<f64> = (0..n_in).map(|_| 0.5).chain((0..n_out).map(|_| 3.0)).collect();
        let chain = chain_at_distances(&ds);
        let r = bayes_factor_set_expansion(&chain, &plane(), 1.0, |g| gaussian(3, 1.5, g), 2000, seed).unwrap();
        prop_assert_eq!(r.posterior_in_c, n_in);
        prop_assert_eq!(r.posterior_out_c, n_out);
        prop_assert_eq!(r.flag, BayesFactorFlag::Finite);
        let prior_odds = r.prior_in_c / r.prior_out_c;
        prop_assert!((r.bf01 * prior_odds - r.posterior_odds()).abs() < 1e-12 * r.posterior_odds());
    }

    #[test]
    fn quantiles_are_ordered(mut v in proptest::collection::vec(-5.0..5.0f64, 1..60), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(quantile_sorted(&v, lo) <= quantile_sorted(&v, hi));
        prop_assert_eq!(quantile_sorted(&v, 0.0), v[0]);
        prop_assert_eq!(quantile_sorted(&v, 1.0), v[v.len() - 1]);
    }
}

#[test]
fn all_draws_in_the_set_give_the_infinite_sentinel() {
    let chain = chain_at_distances(&[0.1, 0.2, 0.3]);
    let r = bayes_factor_set_expansion(&chain, &plane(), 1.0, |g| gaussian(3, 1.0, g), 1000, 1).unwrap();
    assert_eq!(r.flag, BayesFactorFlag::PosteriorAllInC);
    assert_eq!(r.bf01, f64::INFINITY);
}

#[test]
fn mismatched_lambda_is_rejected() {
    let mut chain = chain_at_distances(&[0.1, 2.0]);
    chain.lambda_used = vec![2.0];
    assert!(bayes_factor_set_expansion(&chain, &plane(), 1.0, |g| gaussian(3, 1.0, g), 10, 1).is_err());
}

#[test]
fn balanced_lambda_splits_prior_mass() {
    let prior = |g: &mut ChaCha8Rng| gaussian(3, 3.0, g);
    let l = balanced_lambda(&plane(), prior, 20_000, 4).unwrap();
    // the distance to a plane is |N(·, 3²)| along its normal
    let mut chain = Chain::from_draws(vec![DVector::zeros(3)], vec![DVector::zeros(3)]);
    chain.lambda_used = vec![l];
    let r = bayes_factor_set_expansion(&chain, &plane(), l, prior, 100_000, 9).unwrap();
    assert!((r.prior_in_c - 0.5).abs() < 0.01, "prior mass {}", r.prior_in_c);
}

#[test]
fn summary_counts_exact_zeros() {
    let beta: Vec<_> = (0..100).map(|k| DVector::from_vec(vec![k as f64, 1.0])).collect();
    let theta: Vec<_> = (0..100)
        .map(|k| DVector::from_vec(vec![if k < 30 { 0.0 } else { k as f64 }, 1.0]))
        .collect();
    let s = summarize(&Chain::from_draws(beta, theta), 0.9).unwrap();
    let t: Vec<_> = s.theta().collect();
    assert_eq!(t[0].zero_rate, 0.3);
    assert_eq!(t[1].zero_rate, 0.0);
    assert_eq!(t[1].lower, 1.0);
    assert_eq!(s.beta().next().unwrap().median, 49.5);
}

#[test]
fn factor_counts_follow_the_activity_rule() {
    let layout = FlowLayout { n_nodes: 3, t: 2, d: 2 };
    let mut on = DVector::zeros(layout.dim());
    on[layout.factor_offset(0)] = 1.0;
    on[layout.loadings_offset()] = 1.0;
    // second factor has loadings but no edges
    on[layout.loadings_offset() + layout.t] = 1.0;
    let off = DVector::zeros(layout.dim());
    let chain = Chain::from_draws(vec![off.clone(); 3], vec![on.clone(), on, off]);
    let fc = factor_count_posterior(&chain, &layout).unwrap();
    assert_eq!(fc.counts, vec![1, 1, 0]);
    assert_eq!(fc.mode, 1);
    assert!((fc.histogram[1] - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn shrinking_map_contracts_the_covariance() {
    let mut g = ChaCha8Rng::seed_from_u64(2);
    let beta: Vec<_> = (0..2000).map(|_| gaussian(3, 1.0, &mut g)).collect();
    let theta: Vec<_> = beta.iter().map(|b| b * 0.5).collect();
    let c = covariance_contraction(&Chain::from_draws(beta, theta), 100, 1).unwrap();
    assert!(c.holds);
    assert!((c.trace_theta / c.trace_beta - 0.25).abs() < 1e-12);
}
