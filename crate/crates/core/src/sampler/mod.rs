//! Hamiltonian Monte Carlo in `β`-space.
//!
//! Plain HMC (fixed number of leapfrog steps) and NUTS share the same
//! leapfrog integrator, step-size adaptation and bookkeeping. `θ` draws are
//! computed after sampling by pushing each retained `β` through the model's
//! prox.

pub mod adapt;
pub mod diagnostics;
pub mod hmc;
pub mod nuts;
mod output;

pub use diagnostics::{diagnostics, ess, split_rhat, Diagnostics};
pub use hmc::{hamiltonian, hmc_step, kinetic, leapfrog, leapfrog_with, PhasePoint, StepInfo};
pub use nuts::nuts_step;
pub use output::{read_chain_csv, write_chain_csv, ChainMetadata, Draws};

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::DeformationCurve;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::rng;

/// A differentiable log density. `stream` keys any randomness inside the
/// gradient (simultaneous-perturbation Jacobians) so the gradient is a
/// fixed function within one transition.
pub trait Target: Sync {
    fn dim(&self) -> usize;
    fn log_density_and_grad(&self, x: &DVector<f64>, stream: u64) -> Result<(f64, DVector<f64>)>;
}

impl Target for Model {
    fn dim(&self) -> usize {
        Model::dim(self)
    }

    fn log_density_and_grad(&self, x: &DVector<f64>, stream: u64) -> Result<(f64, DVector<f64>)> {
        self.log_posterior_and_grad(x, stream)
    }
}

/// A target given by a closure.
pub struct FnTarget<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> Target for FnTarget<F>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_and_grad(&self, x: &DVector<f64>, _stream: u64) -> Result<(f64, DVector<f64>)> {
        Ok((self.f)(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Nuts,
    Hmc,
}

/// Sampler settings. `n_samples` counts every iteration, burn-in included;
/// `(n_samples − n_burnin) / thin` draws are kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub algorithm: Algorithm,
    /// Initial (or, without adaptation, fixed) leapfrog step.
    pub step_size: f64,
    /// Leapfrog steps for HMC, maximum tree depth for NUTS.
    pub n_leapfrog: usize,
    /// Diagonal mass; identity when absent.
    pub mass: Option<Vec<f64>>,
    pub n_samples: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub adapt_step_size: bool,
    /// Re-estimate a diagonal mass from the first half of burn-in.
    pub adapt_mass: bool,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Nuts,
            step_size: 0.1,
            n_leapfrog: 10,
            mass: None,
            n_samples: 2000,
            n_burnin: 1000,
            thin: 1,
            target_accept: 0.8,
            adapt_step_size: true,
            adapt_mass: false,
            seed: 0,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("step_size must be positive".into()));
        }
        if self.n_leapfrog == 0 || self.thin == 0 {
            return Err(Error::Config("n_leapfrog and thin must be at least 1".into()));
        }
        if self.n_burnin >= self.n_samples {
            return Err(Error::Config(format!(
                "n_samples ({}) counts burn-in and must exceed n_burnin ({})",
                self.n_samples, self.n_burnin
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must be in (0, 1)".into()));
        }
        if let Some(m) = &self.mass {
            if m.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::Config("mass entries must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        (self.n_samples - self.n_burnin) / self.thin
    }
}

/// Where each chain's λ comes from.
#[derive(Clone, Debug, Default)]
pub enum LambdaPolicy {
    /// The model's own λ.
    #[default]
    Fixed,
    /// One draw from the calibrated prior per chain.
    PerChain { curve: DeformationCurve, a: f64, b: f64 },
    /// A fresh draw before every iteration.
    PerIteration { curve: DeformationCurve, a: f64, b: f64 },
}

/// Output of one chain.
#[derive(Clone, Debug)]
pub struct Chain {
    pub beta_draws: Vec<DVector<f64>>,
    pub theta_draws: Vec<DVector<f64>>,
    /// Log posterior at each retained draw.
    pub log_posterior: Vec<f64>,
    /// Mean acceptance statistic after burn-in.
    pub accept_rate: f64,
    /// `H` after every iteration, burn-in included.
    pub energies: Vec<f64>,
    /// Master seed and chain index the chain was drawn from.
    pub seed: u64,
    pub chain_index: usize,
    /// λ in effect: one value, or one per iteration.
    pub lambda_used: Vec<f64>,
    /// Divergent iterations, burn-in included.
    pub n_divergent: usize,
    /// Step size after adaptation.
    pub step_size: f64,
}

impl Chain {
    /// A chain rebuilt from stored draws; sampler bookkeeping is zeroed.
    pub fn from_draws(beta_draws: Vec<DVector<f64>>, theta_draws: Vec<DVector<f64>>) -> Self {
        Self {
            log_posterior: vec![f64::NAN; beta_draws.len()],
            beta_draws,
            theta_draws,
            accept_rate: f64::NAN,
            energies: Vec::new(),
            seed: 0,
            chain_index: 0,
            lambda_used: Vec::new(),
            n_divergent: 0,
            step_size: f64::NAN,
        }
    }

    /// Draws of several chains concatenated in order.
    pub fn pooled(chains: &[Chain]) -> Self {
        let mut out = Self::from_draws(Vec::new(), Vec::new());
        for c in chains {
            out.beta_draws.extend(c.beta_draws.iter().cloned());
            out.theta_draws.extend(c.theta_draws.iter().cloned());
            out.log_posterior.extend(&c.log_posterior);
            out.n_divergent += c.n_divergent;
            for l in &c.lambda_used {
                if !out.lambda_used.contains(l) {
                    out.lambda_used.push(*l);
                }
            }
        }
        if let Some(c) = chains.first() {
            out.seed = c.seed;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.beta_draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_draws.is_empty()
    }
}

const MAX_INIT_ATTEMPTS: usize = 100;

fn initial_state(model: &Model, rng: &mut ChaCha8Rng) -> Result<PhasePoint> {
    for _ in 0..MAX_INIT_ATTEMPTS {
        let x = model.initial_point(rng);
        let stream = rng.random();
        if let Some(p) = PhasePoint::evaluate(model, x, stream)? {
            return Ok(p);
        }
    }
    Err(Error::InvalidInput(format!(
        "no finite starting point found for model {} in {MAX_INIT_ATTEMPTS} attempts",
        model.name
    )))
}

/// Runs one chain of `cfg.algorithm` on `model` with randomness from `rng`.
pub fn run_chain(
    model: &Model,
    cfg: &HmcConfig,
    policy: &LambdaPolicy,
    rng: &mut ChaCha8Rng,
    seed: u64,
    chain_index: usize,
) -> Result<Chain> {
    cfg.validate()?;
    let p = model.dim();
    let mut inv_mass = match &cfg.mass {
        Some(m) if m.len() != p => {
            return Err(Error::Config(format!("mass has length {}, model dimension is {p}", m.len())));
        }
        Some(m) => DVector::from_iterator(p, m.iter().map(|x| 1.0 / x)),
        None => DVector::from_element(p, 1.0),
    };

    let mut lambda_used = Vec::new();
    let mut current_model = match policy {
        LambdaPolicy::Fixed => {
            lambda_used.extend(model.lambda());
            model.clone()
        }
        LambdaPolicy::PerChain { curve, a, b } | LambdaPolicy::PerIteration { curve, a, b } => {
            let l = curve.sample_lambda(*a, *b, rng)?;
            lambda_used.push(l);
            model.with_lambda(l)?
        }
    };

    let mut state = initial_state(&current_model, rng)?;
    let mut eps = cfg.step_size;
    if cfg.adapt_step_size {
        let stream = rng.random();
        eps = adapt::find_reasonable_step(&current_model, &state, eps, &inv_mass, rng, stream)?;
    }
    let mut da = adapt::DualAveraging::new(eps, cfg.target_accept);
    let mut var_est = adapt::VarianceEstimator::new(p);
    let mass_window = (cfg.n_burnin / 4, cfg.n_burnin / 2);

    let mut chain = Chain {
        beta_draws: Vec::with_capacity(cfg.n_retained()),
        theta_draws: Vec::new(),
        log_posterior: Vec::with_capacity(cfg.n_retained()),
        accept_rate: 0.0,
        energies: Vec::with_capacity(cfg.n_samples),
        seed,
        chain_index,
        lambda_used: Vec::new(),
        n_divergent: 0,
        step_size: eps,
    };
    let mut accept_sum = 0.0;

    for iter in 0..cfg.n_samples {
        if iter > 0 {
            if let LambdaPolicy::PerIteration { curve, a, b } = policy {
                let l = curve.sample_lambda(*a, *b, rng)?;
                lambda_used.push(l);
                current_model = model.with_lambda(l)?;
                let stream = rng.random();
                state = PhasePoint::evaluate(&current_model, state.x.clone(), stream)?.ok_or_else(|| {
                    Error::InvalidInput("log posterior not finite after refreshing lambda".into())
                })?;
            }
        }
        let stream: u64 = rng.random();
        // the gradient at the start point must use this transition's stream too
        if current_model.gradient_is_stochastic() {
            if let Some(s) = PhasePoint::evaluate(&current_model, state.x.clone(), stream)? {
                state = s;
            }
        }
        let step = match cfg.algorithm {
            Algorithm::Hmc => hmc::hmc_step(&current_model, &state, eps, cfg.n_leapfrog, &inv_mass, rng, stream)?,
            Algorithm::Nuts => nuts::nuts_step(&current_model, &state, eps, cfg.n_leapfrog, &inv_mass, rng, stream)?,
        };
        state = step.point;
        chain.energies.push(step.energy);
        if step.divergent {
            chain.n_divergent += 1;
        }

        if iter < cfg.n_burnin {
            if cfg.adapt_step_size {
                da.update(step.accept_prob);
                eps = da.current();
            }
            if cfg.adapt_mass {
                if iter >= mass_window.0 && iter < mass_window.1 {
                    var_est.add(&state.x);
                }
                if iter + 1 == mass_window.1 && var_est.count() >= 10 {
                    inv_mass = var_est.regularized_variance();
                    let stream = rng.random();
                    let e0 = adapt::find_reasonable_step(&current_model, &state, eps, &inv_mass, rng, stream)?;
                    da = adapt::DualAveraging::new(e0, cfg.target_accept);
                    eps = e0;
                }
            }
            if iter + 1 == cfg.n_burnin && cfg.adapt_step_size {
                eps = da.final_step();
            }
        } else {
            accept_sum += step.accept_prob;
            if (iter - cfg.n_burnin + 1).is_multiple_of(cfg.thin) {
                chain.beta_draws.push(state.x.clone());
                chain.log_posterior.push(state.logp);
            }
        }
    }
    if chain.n_divergent * 2 > cfg.n_samples {
        return Err(Error::ChainFailure {
            divergent: chain.n_divergent,
            total: cfg.n_samples,
        });
    }
    chain.accept_rate = accept_sum / (cfg.n_samples - cfg.n_burnin) as f64;
    chain.step_size = eps;
    chain.lambda_used = lambda_used;
    chain.theta_draws = if let LambdaPolicy::PerIteration { .. } = policy {
        // θ under the λ of the iteration that produced each draw
        let idx = |k: usize| cfg.n_burnin + (k + 1) * cfg.thin - 1;
        chain
            .beta_draws
            .iter()
            .enumerate()
            .map(|(k, b)| model.with_lambda(chain.lambda_used[idx(k)])?.theta(b))
            .collect::<Result<_>>()?
    } else {
        chain.beta_draws.iter().map(|b| current_model.theta(b)).collect::<Result<_>>()?
    };
    Ok(chain)
}

/// Single chain on the seed in `cfg`, λ fixed by the model.
pub fn nuts_run(model: &Model, cfg: &HmcConfig) -> Result<Chain> {
    let mut rng = rng::chain_stream(cfg.seed, 0);
    run_chain(model, cfg, &LambdaPolicy::Fixed, &mut rng, cfg.seed, 0)
}

/// `n_chains` chains in parallel; chain `k` uses stream `k` of `cfg.seed`.
pub fn run_chains(model: &Model, cfg: &HmcConfig, policy: &LambdaPolicy, n_chains: usize) -> Result<Vec<Chain>> {
    if n_chains == 0 {
        return Err(Error::Config("need at least one chain".into()));
    }
    (0..n_chains)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::chain_stream(cfg.seed, k);
            run_chain(model, cfg, policy, &mut rng, cfg.seed, k)
        })
        .collect()
}
