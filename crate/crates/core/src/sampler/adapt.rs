//! Step-size and mass-matrix adaptation during burn-in.

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;

use super::hmc::{hamiltonian, leapfrog, sample_momentum, PhasePoint};
use super::Target;
use crate::error::Result;

/// Nesterov dual averaging of `log ε` toward a target acceptance rate.
#[derive(Clone, Debug)]
pub struct DualAveraging {
    mu: f64,
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    m: usize,
}

impl DualAveraging {
    pub fn new(eps0: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps0).ln(),
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            h_bar: 0.0,
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            m: 0,
        }
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_prob: f64) -> f64 {
        self.m += 1;
        let m = self.m as f64;
        let w = 1.0 / (m + self.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_eps = self.mu - m.sqrt() / self.gamma * self.h_bar;
        let eta = m.powf(-self.kappa);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
        self.log_eps.exp()
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// The averaged step size used after burn-in.
    pub fn final_step(&self) -> f64 {
        if self.m == 0 {
            self.current()
        } else {
            self.log_eps_bar.exp()
        }
    }
}

/// Doubles or halves `eps` until a single leapfrog step has acceptance
/// probability crossing one half.
pub fn find_reasonable_step<T: Target + ?Sized>(
    target: &T,
    start: &PhasePoint,
    eps0: f64,
    inv_mass: &DVector<f64>,
    rng: &mut ChaCha8Rng,
    stream: u64,
) -> Result<f64> {
    let v = sample_momentum(inv_mass, rng);
    let h0 = hamiltonian(start, &v, inv_mass);
    let log_accept = |eps: f64| -> Result<f64> {
        Ok(match leapfrog(target, start, &v, eps, 1, inv_mass, stream)? {
            Some((p, v1)) => {
                let d = h0 - hamiltonian(&p, &v1, inv_mass);
                if d.is_finite() {
                    d
                } else {
                    f64::NEG_INFINITY
                }
            }
            None => f64::NEG_INFINITY,
        })
    };
    let mut eps = eps0;
    let a = if log_accept(eps)? > 0.5f64.ln() { 1.0 } else { -1.0 };
    for _ in 0..100 {
        let la = log_accept(eps)?;
        if !(a * la > -a * 2f64.ln()) {
            break;
        }
        let next = eps * 2f64.powf(a);
        if !(1e-10..=1e3).contains(&next) {
            break;
        }
        eps = next;
    }
    Ok(eps)
}

/// Running mean and variance (Welford) for the diagonal mass estimate.
#[derive(Clone, Debug)]
pub struct VarianceEstimator {
    n: usize,
    mean: DVector<f64>,
    m2: DVector<f64>,
}

impl VarianceEstimator {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(dim),
            m2: DVector::zeros(dim),
        }
    }

    pub fn add(&mut self, x: &DVector<f64>) {
        self.n += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = x - &self.mean;
        self.m2 += delta.component_mul(&delta2);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Sample variances shrunk toward `1e-3`, used as the inverse mass.
    pub fn regularized_variance(&self) -> DVector<f64> {
        let n = self.n as f64;
        if self.n < 2 {
            return DVector::from_element(self.mean.len(), 1.0);
        }
        let var = &self.m2 / (n - 1.0);
        var.map(|v| (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAveraging::new(1.0, 0.8);
        // persistent low acceptance shrinks the step
        for _ in 0..50 {
            da.update(0.2);
        }
        assert!(da.final_step() < 1.0);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -1.0, 0.5];
        let mut est = VarianceEstimator::new(1);
        for x in xs {
            est.add(&DVector::from_element(1, x));
        }
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        let expected = (5.0 / 10.0) * var + 1e-3 * 0.5;
        assert!((est.regularized_variance()[0] - expected).abs() < 1e-12);
    }
}
