//! Jacobians of proximal maps and the chain rule into `β`-space.
//!
//! For `θ = prox(β)` the log-posterior gradient is
//! `∇_β log Π(β | y) = Jᵀ ∇_θ log L(y; θ) + ∇_β log Π⁰(β)` with `J = ∂θ/∂β`.
//! `J` comes from the operator when it has a closed form, and from
//! simultaneous-perturbation differences otherwise.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prox::ProxOperator;

/// Step used by [`JacobianMode::FiniteDifference`].
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// How the perturbation directions are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationDesign {
    /// Randomised Hadamard columns when a Hadamard matrix of order `m` with
    /// more than `p` columns exists, independent signs otherwise. With
    /// orthogonal sign columns the cross terms cancel exactly, so linear maps
    /// are recovered without noise.
    #[default]
    Auto,
    /// Independent uniform ±1 entries.
    Rademacher,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsaConfig {
    pub epsilon: f64,
    /// Number of perturbation vectors.
    pub m: usize,
    pub seed: u64,
    pub design: PerturbationDesign,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-7,
            m: 20,
            seed: 0,
            design: PerturbationDesign::Auto,
        }
    }
}

impl SpsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("SPSA epsilon must be positive".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("SPSA needs at least one perturbation".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Source of the Jacobian in the chain rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Exact Jacobian when the operator provides one, SPSA otherwise.
    #[default]
    Auto,
    /// Always SPSA.
    Spsa,
    /// Central differences (`2p` prox calls).
    FiniteDifference,
}

fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

fn paley(q: usize) -> DMatrix<f64> {
    let residues: Vec<bool> = {
        let mut r = vec![false; q];
        for x in 1..q {
            r[x * x % q] = true;
        }
        r
    };
    let chi = |d: usize| -> f64 {
        if d == 0 {
            0.0
        } else if residues[d] {
            1.0
        } else {
            -1.0
        }
    };
    let n = q + 1;
    let mut h = DMatrix::identity(n, n);
    for j in 1..n {
        h[(0, j)] += 1.0;
        h[(j, 0)] -= 1.0;
    }
    for i in 1..n {
        for j in 1..n {
            h[(i, j)] += chi((j + q - i) % q);
        }
    }
    h
}

/// A Hadamard matrix of order `n` (Sylvester or Paley-I times a power of
/// two), normalised so the first column is all ones.
pub fn hadamard(n: usize) -> Option<DMatrix<f64>> {
    if n == 0 {
        return None;
    }
    let twos = n.trailing_zeros();
    let odd_part = n >> twos;
    let (mut h, mut order) = if odd_part == 1 {
        (DMatrix::from_element(1, 1, 1.0), 1)
    } else {
        // n = 2^a (q + 1) with q ≡ 3 mod 4 prime
        (0..=twos)
            .map(|a| n >> a)
            .find(|&base| base >= 4 && is_prime(base - 1) && (base - 1) % 4 == 3)
            .map(|base| (paley(base - 1), base))?
    };
    while order < n {
        let mut next = DMatrix::zeros(2 * order, 2 * order);
        next.view_mut((0, 0), (order, order)).copy_from(&h);
        next.view_mut((0, order), (order, order)).copy_from(&h);
        next.view_mut((order, 0), (order, order)).copy_from(&h);
        next.view_mut((order, order), (order, order)).copy_from(&(-&h));
        h = next;
        order *= 2;
    }
    for i in 0..n {
        if h[(i, 0)] < 0.0 {
            h.row_mut(i).neg_mut();
        }
    }
    Some(h)
}

/// The `m x p` matrix whose rows are the perturbation vectors `Δ^{(k)}`.
pub fn perturbations(p: usize, cfg: &SpsaConfig) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.m;
    if cfg.design == PerturbationDesign::Auto && p < m {
        if let Some(h) = hadamard(m) {
            let mut cols: Vec<usize> = (1..m).collect();
            cols.shuffle(&mut rng);
            let row_sign: Vec<f64> = (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let col_sign: Vec<f64> = (0..p).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            return DMatrix::from_fn(m, p, |k, j| h[(k, cols[j])] * row_sign[k] * col_sign[j]);
        }
    }
    DMatrix::from_fn(m, p, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

/// Simultaneous-perturbation estimate of `∂θ/∂β` (entry `(i, j)` is
/// `∂θ_i/∂β_j`):
///
/// ```text
/// column j ≈ (1/m) Σ_k {prox(β + εΔ^{(k)}) − prox(β)} / (εΔ^{(k)}_j)
/// ```
///
/// `prox(β)` is evaluated once, so the estimate costs `m + 1` prox calls.
pub fn spsa_jacobian(op: &ProxOperator, beta: &DVector<f64>, cfg: &SpsaConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let base = op.evaluate(beta)?;
    spsa_from_base(op, beta, &base, cfg)
}

fn spsa_from_base(
    op: &ProxOperator,
    beta: &DVector<f64>,
    base: &DVector<f64>,
    cfg: &SpsaConfig,
) -> Result<DMatrix<f64>> {
    let p = beta.len();
    let deltas = perturbations(p, cfg);
    let mut jac = DMatrix::zeros(base.len(), p);
    for k in 0..cfg.m {
        let delta = deltas.row(k).transpose();
        let diff = op.evaluate(&(beta + &delta * cfg.epsilon))? - base;
        for j in 0..p {
            let mut col = jac.column_mut(j);
            col.axpy(1.0 / (delta[j] * cfg.epsilon), &diff, 1.0);
        }
    }
    Ok(jac / cfg.m as f64)
}

/// Central-difference Jacobian with step `h` (`2p` prox calls).
pub fn finite_diff_jacobian(op: &ProxOperator, beta: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput("finite-difference step must be positive".into()));
    }
    let p = beta.len();
    let mut jac: Option<DMatrix<f64>> = None;
    for j in 0..p {
        let mut up = beta.clone();
        up[j] += h;
        let mut down = beta.clone();
        down[j] -= h;
        let col = (op.evaluate(&up)? - op.evaluate(&down)?) / (2.0 * h);
        let jm = jac.get_or_insert_with(|| DMatrix::zeros(col.len(), p));
        jm.set_column(j, &col);
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

/// `θ = prox(β)` and `∂θ/∂β` from the source selected by `mode`.
pub fn prox_and_jacobian(
    op: &ProxOperator,
    beta: &DVector<f64>,
    mode: JacobianMode,
    spsa: &SpsaConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    match mode {
        JacobianMode::Auto => {
            let (theta, jac) = op.evaluate_with_jacobian(beta)?;
            match jac {
                Some(j) => Ok((theta, j)),
                None => {
                    spsa.validate()?;
                    let j = spsa_from_base(op, beta, &theta, spsa)?;
                    Ok((theta, j))
                }
            }
        }
        JacobianMode::Spsa => {
            spsa.validate()?;
            let theta = op.evaluate(beta)?;
            let j = spsa_from_base(op, beta, &theta, spsa)?;
            Ok((theta, j))
        }
        JacobianMode::FiniteDifference => {
            let theta = op.evaluate(beta)?;
            Ok((theta, finite_diff_jacobian(op, beta, DEFAULT_FD_STEP)?))
        }
    }
}

/// `∇_β log Π(β | y)` for `model`, with SPSA draws keyed by `spsa_seed`.
pub fn log_posterior_grad(
    model: &crate::models::Model,
    beta: &DVector<f64>,
    spsa_seed: u64,
) -> Result<DVector<f64>> {
    Ok(model.log_posterior_and_grad(beta, spsa_seed)?.1)
}
