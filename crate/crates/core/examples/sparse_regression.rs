// Sparse linear regression with a soft-threshold prior: null coefficients
// are exactly zero in most posterior draws.

use std::error::Error;

use nalgebra::{DMatrix, DVector};
use proxprior::inference::summarize;
use proxprior::models::make_sparse_regression_model;
use proxprior::rng;
use proxprior::sampler::{nuts_run, HmcConfig};
use rand_distr::{Distribution, StandardNormal};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let seed = 9;
    let truth = [2.0, -1.5, 0.0, 0.0, 0.0];
    let n = 50;
    let mut r = rng::stream(seed, rng::STREAM_DATA);
    let x = DMatrix::from_fn(n, truth.len(), |_, _| StandardNormal.sample(&mut r));
    let e = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
    let y = &x * DVector::from_row_slice(&truth) + e;

    let model = make_sparse_regression_model(x, y, 1.0, 1.0)?;
    let chain = nuts_run(&model, &HmcConfig { seed, ..HmcConfig::default() })?;
    let summary = summarize(&chain, 0.95)?;
    println!("coef   truth   mean     95% interval       zero rate");
    for (row, t) in summary.theta().zip(truth) {
        println!(
            "{:>4} {:>7.2} {:>7.3}  [{:>7.3}, {:>7.3}]  {:.2}",
            row.index, t, row.mean, row.lower, row.upper, row.zero_rate
        );
    }
    let signal_zero = summary.theta().take(2).map(|r| r.zero_rate).fold(0.0, f64::max);
    if signal_zero > 0.05 {
        return Err(format!("signal coefficients zeroed too often ({signal_zero})").into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("sparse_regression failed");
}
