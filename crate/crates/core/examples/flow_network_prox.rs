// The flow prox maps an arbitrary vector of edge values to a feasible flow
// network: skew-symmetric, conserved at every node apart from a sparse set
// of external in/out-flows on the diagonal.

use std::error::Error;

use nalgebra::DVector;
use proxprior::admm::{n_edges, prox_flow_detailed, AdmmConfig};
use proxprior::io::{read_edge_list, write_edge_list};
use proxprior::rng;
use rand_distr::{Distribution, StandardNormal};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let n_nodes = 5;
    let mut r = rng::stream(2, rng::STREAM_PRIOR_MC);
    let beta = DVector::from_fn(n_edges(n_nodes), |_, _| 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut r));
    let (net, report) = prox_flow_detailed(&beta, 0.5, 0.5, &AdmmConfig::default())?;
    println!("ADMM: {} iterations, certified {}", report.iterations, report.certified);
    println!("flow matrix{:.3}", net.to_matrix());
    println!(
        "skew residual {:.1e}, conservation residual {:.1e}",
        net.skew_residual(),
        net.conservation_residual()
    );
    if net.conservation_residual() > 1e-6 {
        return Err("prox output is not a feasible flow".into());
    }

    let mut buf = Vec::new();
    write_edge_list(&net, &mut buf)?;
    let back = read_edge_list(buf.as_slice(), n_nodes)?;
    println!("edge list round trip exact: {}", back == net);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("flow_network_prox failed");
}
