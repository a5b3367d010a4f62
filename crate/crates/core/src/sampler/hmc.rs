//! Leapfrog integration and the Metropolis-corrected HMC transition.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Target;
use crate::error::{Error, Result};

/// `|ΔH|` beyond this marks a divergent trajectory.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Position with its log density and gradient.
#[derive(Clone, Debug)]
pub struct PhasePoint {
    pub x: DVector<f64>,
    pub logp: f64,
    pub grad: DVector<f64>,
}

impl PhasePoint {
    /// Evaluates `target` at `x`; `None` if the density or gradient is not
    /// finite or the prox failed to converge there.
    pub fn evaluate<T: Target + ?Sized>(target: &T, x: DVector<f64>, stream: u64) -> Result<Option<Self>> {
        match target.log_density_and_grad(&x, stream) {
            Ok((logp, grad)) if logp.is_finite() && grad.iter().all(|g| g.is_finite()) => {
                Ok(Some(Self { x, logp, grad }))
            }
            Ok(_) => Ok(None),
            Err(Error::Convergence { .. }) | Err(Error::Numerical { .. }) => {
                log::debug!("prox evaluation failed inside a trajectory; treating as divergent");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

/// `½ vᵀ M⁻¹ v`.
pub fn kinetic(v: &DVector<f64>, inv_mass: &DVector<f64>) -> f64 {
    0.5 * v.iter().zip(inv_mass.iter()).map(|(a, m)| a * a * m).sum::<f64>()
}

/// `H = −log π(x) + K(v)`.
pub fn hamiltonian(p: &PhasePoint, v: &DVector<f64>, inv_mass: &DVector<f64>) -> f64 {
    -p.logp + kinetic(v, inv_mass)
}

/// `v ~ N(0, M)` for the diagonal mass `M = 1 / inv_mass`.
pub fn sample_momentum(inv_mass: &DVector<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
    inv_mass.map(|m| rng.sample::<f64, _>(StandardNormal) / m.sqrt())
}

/// `n_steps` half-kick / drift / half-kick cycles. `None` signals a
/// divergent trajectory (non-finite density or gradient).
pub fn leapfrog<T: Target + ?Sized>(
    target: &T,
    start: &PhasePoint,
    v: &DVector<f64>,
    eps: f64,
    n_steps: usize,
    inv_mass: &DVector<f64>,
    stream: u64,
) -> Result<Option<(PhasePoint, DVector<f64>)>> {
    let mut p = start.clone();
    let mut v = v.clone();
    for _ in 0..n_steps {
        v.axpy(0.5 * eps, &p.grad, 1.0);
        let x = &p.x + v.component_mul(inv_mass) * eps;
        p = match PhasePoint::evaluate(target, x, stream)? {
            Some(q) => q,
            None => return Ok(None),
        };
        v.axpy(0.5 * eps, &p.grad, 1.0);
    }
    Ok(Some((p, v)))
}

/// Leapfrog for a plain gradient function, without density bookkeeping.
pub fn leapfrog_with<G>(
    x: &DVector<f64>,
    v: &DVector<f64>,
    mut grad: G,
    eps: f64,
    n_steps: usize,
    inv_mass: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)>
where
    G: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let mut x = x.clone();
    let mut v = v.clone();
    let mut g = grad(&x);
    for _ in 0..n_steps {
        v.axpy(0.5 * eps, &g, 1.0);
        x += v.component_mul(inv_mass) * eps;
        g = grad(&x);
        if g.iter().any(|a| !a.is_finite()) {
            return None;
        }
        v.axpy(0.5 * eps, &g, 1.0);
    }
    Some((x, v))
}

/// Outcome of one transition.
#[derive(Clone, Debug)]
pub struct StepInfo {
    pub point: PhasePoint,
    pub accepted: bool,
    /// Metropolis acceptance probability (NUTS: mean over the tree).
    pub accept_prob: f64,
    /// `H` at the start of the transition.
    pub h_start: f64,
    /// `H` at the proposal (`+∞` when divergent).
    pub h_proposal: f64,
    /// `H` of the state carried forward.
    pub energy: f64,
    pub divergent: bool,
    /// Tree depth for NUTS, 0 for HMC.
    pub depth: usize,
}

/// One HMC transition: fresh momentum, `n_steps` leapfrog steps, and
/// acceptance with probability `min{1, exp(H − H*)}`.
pub fn hmc_step<T: Target + ?Sized>(
    target: &T,
    current: &PhasePoint,
    eps: f64,
    n_steps: usize,
    inv_mass: &DVector<f64>,
    rng: &mut ChaCha8Rng,
    stream: u64,
) -> Result<StepInfo> {
    let v0 = sample_momentum(inv_mass, rng);
    let h_start = hamiltonian(current, &v0, inv_mass);
    let proposal = leapfrog(target, current, &v0, eps, n_steps, inv_mass, stream)?;
    let u: f64 = rng.random();
    let Some((p, v)) = proposal else {
        return Ok(StepInfo {
            point: current.clone(),
            accepted: false,
            accept_prob: 0.0,
            h_start,
            h_proposal: f64::INFINITY,
            energy: h_start,
            divergent: true,
            depth: 0,
        });
    };
    let h_proposal = hamiltonian(&p, &v, inv_mass);
    let divergent = !(h_proposal - h_start).is_finite() || (h_proposal - h_start).abs() > DIVERGENCE_THRESHOLD;
    let accept_prob = if h_proposal.is_finite() {
        (h_start - h_proposal).exp().min(1.0)
    } else {
        0.0
    };
    let accepted = u < accept_prob;
    Ok(StepInfo {
        energy: if accepted { h_proposal } else { h_start },
        point: if accepted { p } else { current.clone() },
        accepted,
        accept_prob,
        h_start,
        h_proposal,
        divergent,
        depth: 0,
    })
}
