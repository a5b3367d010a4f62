// Soft-threshold prior: pushing Gaussian draws through the ℓ1 prox puts
// positive mass exactly on zero.

use std::error::Error;

use nalgebra::DVector;
use proxprior::prox::{prox_soft_threshold, soft_threshold_jacobian};
use proxprior::rng;
use rand_distr::{Distribution, StandardNormal};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let lambda = 0.8;
    let p = 4;
    let mut r = rng::stream(7, rng::STREAM_PRIOR_MC);
    let n = 20_000;
    let mut zeros = 0usize;
    for _ in 0..n {
        let beta = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut r));
        let theta = prox_soft_threshold(&beta, lambda)?;
        zeros += theta.iter().filter(|x| **x == 0.0).count();
    }
    let rate = zeros as f64 / (n * p) as f64;
    // pr{|β| ≤ λ} for a standard normal
    let expected = 0.576_289_202_833_964_3;
    println!("zero rate {rate:.4} (expected {expected:.4})");
    if (rate - expected).abs() > 0.02 {
        return Err(format!("zero rate {rate} far from {expected}").into());
    }

    let beta = DVector::from_vec(vec![1.5, -0.3, 0.9, -2.0]);
    let theta = prox_soft_threshold(&beta, lambda)?;
    let jac = soft_threshold_jacobian(&beta, lambda);
    println!("beta  {:?}", beta.as_slice());
    println!("theta {:?}", theta.as_slice());
    println!("Jacobian diagonal {:?}", jac.diagonal().as_slice());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("soft_threshold_prior failed");
}
