// Calibrating λ: build the deformation curve of the soft threshold under a
// standard normal prior and draw λ from a uniform prior on the deformation.

use std::error::Error;

use nalgebra::DVector;
use proxprior::calibration::build_default_curve;
use proxprior::prox::ProxOperator;
use proxprior::rng;
use rand_distr::{Distribution, StandardNormal};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let curve = build_default_curve(
        ProxOperator::soft_threshold,
        |r| DVector::from_element(1, StandardNormal.sample(r)),
        20_000,
        1,
    )?;
    for k in (0..curve.lambdas.len()).step_by(7) {
        println!("lambda {:>9.4}  omega {:.4}", curve.lambdas[k], curve.omegas[k]);
    }
    for w in [0.25, 0.5, 0.75] {
        println!("omega {w} <- lambda {:.4}", curve.lambda_from_omega(w));
    }

    let mut r = rng::stream(1, rng::STREAM_LAMBDA);
    let mut draws: Vec<f64> = (0..1000)
        .map(|_| curve.sample_lambda(1.0, 1.0, &mut r))
        .collect::<Result<_, _>>()?;
    draws.sort_by(f64::total_cmp);
    println!("median lambda under uniform omega: {:.4}", draws[500]);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("calibrate_lambda failed");
}
