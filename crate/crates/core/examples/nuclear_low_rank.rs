// Singular value thresholding turns a noisy rank-one matrix back into a
// rank-one matrix; the group-row prox drops whole rows instead.

use std::error::Error;

use nalgebra::{DMatrix, DVector};
use proxprior::prox::{prox_group_row, prox_nuclear};
use proxprior::rng;
use rand_distr::{Distribution, Normal};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut r = rng::stream(3, rng::STREAM_DATA);
    let noise = Normal::new(0.0, 0.1)?;
    let u = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
    let v = DVector::from_vec(vec![2.0, -1.0, 1.0]);
    let b = &u * v.transpose() + DMatrix::from_fn(4, 3, |_, _| noise.sample(&mut r));

    let theta = prox_nuclear(&b, 1.0)?;
    let rank_in = b.clone().svd(false, false).rank(1e-9);
    let rank_out = theta.clone().svd(false, false).rank(1e-9);
    println!("rank {rank_in} -> {rank_out}");
    if rank_out != 1 {
        return Err(format!("expected rank one, got {rank_out}").into());
    }

    let rows = prox_group_row(&b, 3.0)?;
    let kept: Vec<usize> = (0..4).filter(|&i| rows.row(i).norm() > 0.0).collect();
    println!("group-row prox keeps rows {kept:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("nuclear_low_rank failed");
}
