//! Likelihoods bundled with proximal priors.
//!
//! A [`Model`] owns a likelihood in `θ`, a smooth prior on `β`, and a block
//! prox `θ = prox(β)`. Sampling happens in `β`-space, where the posterior
//! density is `L{y; prox(β)} Π⁰(β)`.

mod flow_factor;
mod gaussian;

pub use flow_factor::{
    make_flow_factor_model, read_flow_csv, synthetic_flow_data, write_flow_csv, FlowData,
    FlowFactorLikelihood, FlowFactorOptions, FlowLayout, SyntheticFlow, SyntheticFlowSpec,
    FACTOR_ACTIVE_TOL,
};
pub use gaussian::{
    make_affine_mean_model, make_gaussian_mean_model, make_sparse_regression_model, GaussianMeanLikelihood,
    LinearRegressionLikelihood, SET_EXPANSION_PRIOR_SD,
};

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gradient::{prox_and_jacobian, JacobianMode, SpsaConfig};
use crate::prox::{ConvexSet, ProxKind, ProxOperator};

/// `log L(y; θ)` and its gradient.
pub trait Likelihood: Send + Sync + fmt::Debug {
    /// Length of `θ`.
    fn dim(&self) -> usize;
    fn log_lik(&self, theta: &DVector<f64>) -> f64;
    fn grad_log_lik(&self, theta: &DVector<f64>) -> DVector<f64>;
    fn log_lik_and_grad(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.log_lik(theta), self.grad_log_lik(theta))
    }
}

/// Constant likelihood: the posterior is the prior pushed through the prox.
#[derive(Clone, Copy, Debug)]
pub struct FlatLikelihood(pub usize);

impl Likelihood for FlatLikelihood {
    fn dim(&self) -> usize {
        self.0
    }

    fn log_lik(&self, _theta: &DVector<f64>) -> f64 {
        0.0
    }

    fn grad_log_lik(&self, _theta: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.0)
    }
}

/// Covariance of a Gaussian prior block.
#[derive(Clone, Debug)]
pub enum Covariance {
    /// Per-coordinate variances.
    Diagonal(DVector<f64>),
    Full {
        cov: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
    },
}

impl Covariance {
    pub fn full(cov: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::InvalidInput("prior covariance is not positive definite".into()))?;
        Ok(Covariance::Full { cov, chol })
    }
}

/// Density of one contiguous block of `β`.
#[derive(Clone, Debug)]
pub enum PriorBlock {
    Gaussian { mean: DVector<f64>, cov: Covariance },
    /// `s = log σ²` with `σ² ~ InverseGamma(shape, scale)`:
    /// `log p(s) = −shape·s − scale·e^{−s} + const`.
    LogInverseGamma { shape: f64, scale: f64 },
}

impl PriorBlock {
    pub fn standard_normal(p: usize) -> Self {
        Self::isotropic(p, 1.0)
    }

    pub fn isotropic(p: usize, sd: f64) -> Self {
        PriorBlock::Gaussian {
            mean: DVector::zeros(p),
            cov: Covariance::Diagonal(DVector::from_element(p, sd * sd)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PriorBlock::Gaussian { mean, .. } => mean.len(),
            PriorBlock::LogInverseGamma { .. } => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn log_density_and_grad(&self, b: &DVector<f64>) -> (f64, DVector<f64>) {
        match self {
            PriorBlock::Gaussian { mean, cov } => {
                let r = b - mean;
                let sol = match cov {
                    Covariance::Diagonal(var) => r.component_div(var),
                    Covariance::Full { chol, .. } => chol.solve(&r),
                };
                (-0.5 * r.dot(&sol), -sol)
            }
            PriorBlock::LogInverseGamma { shape, scale } => {
                let s = b[0];
                let e = (-s).exp();
                (-shape * s - scale * e, DVector::from_element(1, -shape + scale * e))
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match self {
            PriorBlock::Gaussian { mean, cov } => {
                let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                match cov {
                    Covariance::Diagonal(var) => mean + z.component_mul(&var.map(f64::sqrt)),
                    Covariance::Full { chol, .. } => mean + chol.l() * z,
                }
            }
            PriorBlock::LogInverseGamma { shape, scale } => {
                // σ² = scale / G with G ~ Gamma(shape, 1)
                let g: f64 = rand_distr::Distribution::sample(
                    &rand_distr::Gamma::new(*shape, 1.0).expect("positive shape"),
                    rng,
                );
                DVector::from_element(1, (scale / g).ln())
            }
        }
    }
}

/// How a block of `β` is mapped to `θ`.
#[derive(Clone, Debug)]
pub struct ProxBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    /// `None` is the identity.
    pub op: Option<ProxOperator>,
    /// Re-scaled by [`Model::with_lambda`].
    pub calibrated: bool,
    /// Project onto the nonnegative orthant after the prox.
    pub nonnegative: bool,
}

impl ProxBlock {
    pub fn new(name: &str, offset: usize, len: usize, op: Option<ProxOperator>) -> Self {
        Self {
            name: name.to_string(),
            offset,
            len,
            op,
            calibrated: false,
            nonnegative: false,
        }
    }

    pub fn calibrated(mut self) -> Self {
        self.calibrated = true;
        self
    }

    fn apply(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let t = match &self.op {
            Some(op) => op.evaluate(b)?,
            None => b.clone(),
        };
        Ok(if self.nonnegative { t.map(|x| x.max(0.0)) } else { t })
    }

    fn apply_with_jacobian(
        &self,
        b: &DVector<f64>,
        mode: JacobianMode,
        spsa: &SpsaConfig,
    ) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
        let (t, j) = match &self.op {
            Some(op) => {
                let (t, j) = prox_and_jacobian(op, b, mode, spsa)?;
                (t, Some(j))
            }
            None => (b.clone(), None),
        };
        if !self.nonnegative {
            return Ok((t, j));
        }
        let mask = t.map(|x| if x > 0.0 { 1.0 } else { 0.0 });
        let j = j.unwrap_or_else(|| DMatrix::identity(b.len(), b.len()));
        let mut jm = j;
        for (i, m) in mask.iter().enumerate() {
            if *m == 0.0 {
                jm.row_mut(i).fill(0.0);
            }
        }
        Ok((t.map(|x| x.max(0.0)), Some(jm)))
    }
}

/// Problem-specific starting point for the sampler.
pub type InitFn = Arc<dyn Fn(&mut ChaCha8Rng) -> DVector<f64> + Send + Sync>;

/// Likelihood, `β`-prior and block prox.
#[derive(Clone)]
pub struct Model {
    pub name: String,
    likelihood: Arc<dyn Likelihood>,
    blocks: Vec<ProxBlock>,
    prior: Vec<PriorBlock>,
    pub jacobian_mode: JacobianMode,
    pub spsa: SpsaConfig,
    init: Option<InitFn>,
    flow_layout: Option<FlowLayout>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("name", &self.name)
            .field("likelihood", &self.likelihood)
            .field("blocks", &self.blocks)
            .field("prior", &self.prior)
            .finish()
    }
}

impl Model {
    /// Blocks must tile `0..dim` in order, and the prior blocks must tile the
    /// same range.
    pub fn new(
        name: &str,
        likelihood: Arc<dyn Likelihood>,
        blocks: Vec<ProxBlock>,
        prior: Vec<PriorBlock>,
    ) -> Result<Self> {
        let mut next = 0;
        for b in &blocks {
            if b.offset != next {
                return Err(Error::Shape(format!("block {} starts at {} not {next}", b.name, b.offset)));
            }
            if let Some(p) = b.op.as_ref().and_then(|op| op.dim()) {
                if p != b.len {
                    return Err(Error::Shape(format!(
                        "block {} has length {} but its operator acts on {p}",
                        b.name, b.len
                    )));
                }
            }
            next += b.len;
        }
        if next != likelihood.dim() {
            return Err(Error::Shape(format!(
                "blocks cover {next} coordinates, likelihood expects {}",
                likelihood.dim()
            )));
        }
        let prior_len: usize = prior.iter().map(PriorBlock::len).sum();
        if prior_len != next {
            return Err(Error::Shape(format!("prior covers {prior_len} coordinates, blocks cover {next}")));
        }
        Ok(Self {
            name: name.to_string(),
            likelihood,
            blocks,
            prior,
            jacobian_mode: JacobianMode::Auto,
            spsa: SpsaConfig::default(),
            init: None,
            flow_layout: None,
        })
    }

    pub fn with_init(mut self, init: InitFn) -> Self {
        self.init = Some(init);
        self
    }

    pub fn with_jacobian_mode(mut self, mode: JacobianMode) -> Self {
        self.jacobian_mode = mode;
        self
    }

    pub(crate) fn with_flow_layout(mut self, layout: FlowLayout) -> Self {
        self.flow_layout = Some(layout);
        self
    }

    pub fn dim(&self) -> usize {
        self.likelihood.dim()
    }

    pub fn likelihood(&self) -> &dyn Likelihood {
        self.likelihood.as_ref()
    }

    pub fn blocks(&self) -> &[ProxBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ProxBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn prior_blocks(&self) -> &[PriorBlock] {
        &self.prior
    }

    pub fn flow_layout(&self) -> Option<&FlowLayout> {
        self.flow_layout.as_ref()
    }

    /// `(name, offset, len)` for each block of `β`.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        self.blocks.iter().map(|b| (b.name.clone(), b.offset, b.len)).collect()
    }

    /// Scale of the first calibrated block, if any.
    pub fn lambda(&self) -> Option<f64> {
        self.blocks
            .iter()
            .find(|b| b.calibrated)
            .and_then(|b| b.op.as_ref())
            .map(|op| op.lambda())
    }

    /// The set of the first set-expansion block.
    pub fn expansion_set(&self) -> Option<&ConvexSet> {
        self.blocks.iter().find_map(|b| match b.op.as_ref().map(|op| op.kind()) {
            Some(ProxKind::SetExpansion(s)) => Some(s),
            _ => None,
        })
    }

    /// Copy with every calibrated block rescaled so its primary scale is
    /// `lambda`; secondary scales (λ₂ of flows) keep their ratio.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut m = self.clone();
        for b in m.blocks.iter_mut().filter(|b| b.calibrated) {
            if let Some(op) = &b.op {
                b.op = Some(if op.lambda() > 0.0 {
                    op.scaled(lambda / op.lambda())?
                } else {
                    op.with_lambda(lambda)?
                });
            }
        }
        Ok(m)
    }

    /// The calibrated operator at scale `lambda` (for deformation curves).
    pub fn calibrated_operator(&self, lambda: f64) -> Result<ProxOperator> {
        let b = self
            .blocks
            .iter()
            .find(|b| b.calibrated)
            .ok_or_else(|| Error::Config(format!("model {} has no calibrated block", self.name)))?;
        let op = b.op.as_ref().expect("calibrated blocks carry an operator");
        if op.lambda() > 0.0 {
            op.scaled(lambda / op.lambda())
        } else {
            op.with_lambda(lambda)
        }
    }

    fn check_len(&self, beta: &DVector<f64>) -> Result<()> {
        if beta.len() != self.dim() {
            return Err(Error::Shape(format!("beta has length {}, model expects {}", beta.len(), self.dim())));
        }
        Ok(())
    }

    /// `θ = prox(β)` block by block.
    pub fn theta(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(beta)?;
        let mut theta = DVector::zeros(beta.len());
        for b in &self.blocks {
            let t = b.apply(&beta.rows(b.offset, b.len).into_owned())?;
            theta.rows_mut(b.offset, b.len).copy_from(&t);
        }
        Ok(theta)
    }

    /// `log Π⁰(β)` up to a constant.
    pub fn log_prior(&self, beta: &DVector<f64>) -> f64 {
        self.log_prior_and_grad(beta).0
    }

    fn log_prior_and_grad(&self, beta: &DVector<f64>) -> (f64, DVector<f64>) {
        let mut lp = 0.0;
        let mut g = DVector::zeros(beta.len());
        let mut off = 0;
        for p in &self.prior {
            let n = p.len();
            let (v, gb) = p.log_density_and_grad(&beta.rows(off, n).into_owned());
            lp += v;
            g.rows_mut(off, n).copy_from(&gb);
            off += n;
        }
        (lp, g)
    }

    pub fn log_likelihood(&self, theta: &DVector<f64>) -> f64 {
        self.likelihood.log_lik(theta)
    }

    /// `log L{y; prox(β)} + log Π⁰(β)` up to a constant.
    pub fn log_posterior(&self, beta: &DVector<f64>) -> Result<f64> {
        let theta = self.theta(beta)?;
        Ok(self.likelihood.log_lik(&theta) + self.log_prior(beta))
    }

    /// Log posterior and its `β`-gradient by the chain rule through the
    /// prox; `spsa_seed` keys any simultaneous-perturbation estimates.
    pub fn log_posterior_and_grad(&self, beta: &DVector<f64>, spsa_seed: u64) -> Result<(f64, DVector<f64>)> {
        self.check_len(beta)?;
        let p = beta.len();
        let mut theta = DVector::zeros(p);
        let mut jacs = Vec::with_capacity(self.blocks.len());
        for (k, b) in self.blocks.iter().enumerate() {
            let cfg = self.spsa.with_seed(spsa_seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let (t, j) = b.apply_with_jacobian(&beta.rows(b.offset, b.len).into_owned(), self.jacobian_mode, &cfg)?;
            theta.rows_mut(b.offset, b.len).copy_from(&t);
            jacs.push(j);
        }
        let (ll, g_theta) = self.likelihood.log_lik_and_grad(&theta);
        let (lp, mut grad) = self.log_prior_and_grad(beta);
        for (b, j) in self.blocks.iter().zip(&jacs) {
            let gt = g_theta.rows(b.offset, b.len);
            let contrib = match j {
                Some(j) => j.tr_mul(&gt),
                None => gt.into_owned(),
            };
            let mut dst = grad.rows_mut(b.offset, b.len);
            dst += contrib;
        }
        Ok((ll + lp, grad))
    }

    /// Whether the gradient depends on the SPSA seed.
    pub fn gradient_is_stochastic(&self) -> bool {
        match self.jacobian_mode {
            JacobianMode::Spsa => self.blocks.iter().any(|b| b.op.is_some()),
            JacobianMode::FiniteDifference => false,
            JacobianMode::Auto => self
                .blocks
                .iter()
                .any(|b| b.op.as_ref().is_some_and(|op| !op.has_analytic_jacobian())),
        }
    }

    /// A draw from the `β`-prior.
    pub fn sample_prior(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        let mut off = 0;
        for p in &self.prior {
            let n = p.len();
            out.rows_mut(off, n).copy_from(&p.sample(rng));
            off += n;
        }
        out
    }

    /// Starting point for a chain: the model's own initialiser or a prior draw.
    pub fn initial_point(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match &self.init {
            Some(f) => f(rng),
            None => self.sample_prior(rng),
        }
    }
}
