// Projection onto an affine plane: the SPSA Jacobian recovers the
// orthogonal projector onto the plane's direction space.

use std::error::Error;

use nalgebra::DVector;
use proxprior::gradient::{spsa_jacobian, SpsaConfig};
use proxprior::prox::{AffineConstraint, ProxOperator};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let plane = AffineConstraint::hyperplane(&[1.0, 1.0, 1.0], 1.0)?;
    let op = ProxOperator::affine(plane.clone());
    let beta = DVector::from_vec(vec![0.4, -1.2, 2.0]);
    let theta = op.evaluate(&beta)?;
    println!("projection {:.4?} (residual {:.1e})", theta.as_slice(), plane.residual(&theta));

    let jac = spsa_jacobian(&op, &beta, &SpsaConfig { m: 4, ..SpsaConfig::default() })?;
    let err = (&jac - plane.projector()).amax();
    println!("SPSA Jacobian vs projector: max error {err:.2e}");
    if err > 1e-4 {
        return Err(format!("SPSA Jacobian off by {err}").into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("affine_projection failed");
}
