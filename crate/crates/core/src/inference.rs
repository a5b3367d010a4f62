//! Posterior summaries, Bayes factors for set-expansion hypotheses, and
//! factor-count posteriors.

use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FlowLayout, Model};
use crate::prox::ConvexSet;
use crate::rng;
use crate::sampler::Chain;

/// Default number of fresh prior draws for prior masses.
pub const DEFAULT_PRIOR_MC: usize = 100_000;

/// Coordinates with `|θ_j|` at or below this count as exact zeros.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BayesFactorFlag {
    Finite,
    /// No posterior draw outside `C`: `BF₀₁ = +∞`.
    PosteriorAllInC,
    /// No posterior draw inside `C`: `BF₀₁ = 0`.
    PosteriorNoneInC,
    /// The prior puts (Monte Carlo) mass 0 on `C` or on its complement, so
    /// the prior odds are undefined and `BF₀₁` is NaN.
    PriorDegenerate,
}

/// `BF₀₁ = [pr(C | y) / pr(C̄ | y)] · [pr(C̄) / pr(C)]`, with membership of
/// `C` meaning `dist_C(β) < λ` (equivalently `θ ∈ C`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub bf01: f64,
    pub flag: BayesFactorFlag,
    pub posterior_in_c: usize,
    pub posterior_out_c: usize,
    pub prior_in_c: f64,
    pub prior_out_c: f64,
    pub lambda: f64,
    pub n_prior_mc: usize,
}

impl HypothesisResult {
    /// Posterior odds of `C` from the stored counts.
    pub fn posterior_odds(&self) -> f64 {
        self.posterior_in_c as f64 / self.posterior_out_c as f64
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

fn lambda_matches(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn assemble(post_in: usize, post_out: usize, prior_in: f64, lambda: f64, n_mc: usize) -> HypothesisResult {
    let prior_out = 1.0 - prior_in;
    let (bf01, flag) = if prior_in == 0.0 || prior_out == 0.0 {
        (f64::NAN, BayesFactorFlag::PriorDegenerate)
    } else if post_out == 0 {
        (f64::INFINITY, BayesFactorFlag::PosteriorAllInC)
    } else if post_in == 0 {
        (0.0, BayesFactorFlag::PosteriorNoneInC)
    } else {
        (
            post_in as f64 / post_out as f64 * (prior_out / prior_in),
            BayesFactorFlag::Finite,
        )
    };
    HypothesisResult {
        bf01,
        flag,
        posterior_in_c: post_in,
        posterior_out_c: post_out,
        prior_in_c: prior_in,
        prior_out_c: prior_out,
        lambda,
        n_prior_mc: n_mc,
    }
}

/// Bayes factor of `θ ∈ C` against `θ ∉ C` from a chain sampled under the
/// set-expansion prior with radius `lambda`. Prior masses come from
/// `n_prior_mc` fresh draws of `prior` on the prior-MC stream of `seed`.
pub fn bayes_factor_set_expansion<F>(
    chain: &Chain,
    set: &ConvexSet,
    lambda: f64,
    mut prior: F,
    n_prior_mc: usize,
    seed: u64,
) -> Result<HypothesisResult>
where
    F: FnMut(&mut ChaCha8Rng) -> DVector<f64>,
{
    if let Some(l) = chain.lambda_used.iter().find(|l| !lambda_matches(**l, lambda)) {
        return Err(Error::Config(format!(
            "chain was sampled with lambda = {l} but the test uses lambda = {lambda}"
        )));
    }
    if chain.is_empty() {
        return Err(Error::InvalidInput("chain has no draws".into()));
    }
    if n_prior_mc == 0 {
        return Err(Error::InvalidInput("n_prior_mc must be positive".into()));
    }
    let post_in = chain.beta_draws.iter().filter(|b| set.distance(b) < lambda).count();
    let post_out = chain.len() - post_in;
    let mut rng = rng::stream(seed, rng::STREAM_PRIOR_MC);
    let prior_hits = (0..n_prior_mc).filter(|_| set.distance(&prior(&mut rng)) < lambda).count();
    Ok(assemble(
        post_in,
        post_out,
        prior_hits as f64 / n_prior_mc as f64,
        lambda,
        n_prior_mc,
    ))
}

/// [`bayes_factor_set_expansion`] with the set, radius and prior taken from
/// a set-expansion model.
pub fn bayes_factor_for_model(chain: &Chain, model: &Model, n_prior_mc: usize, seed: u64) -> Result<HypothesisResult> {
    let set = model
        .expansion_set()
        .ok_or_else(|| Error::Config(format!("model {} has no set-expansion prior", model.name)))?;
    let lambda = model
        .lambda()
        .ok_or_else(|| Error::Config("set-expansion block has no scale".into()))?;
    bayes_factor_set_expansion(chain, set, lambda, |r| model.sample_prior(r), n_prior_mc, seed)
}

/// Median of `dist_C(β)` under the prior: the radius that splits prior mass
/// evenly between `C` and its complement.
pub fn balanced_lambda<F>(set: &ConvexSet, mut prior: F, n_mc: usize, seed: u64) -> Result<f64>
where
    F: FnMut(&mut ChaCha8Rng) -> DVector<f64>,
{
    if n_mc < 1000 {
        return Err(Error::InvalidInput(format!("balanced lambda needs n_mc >= 1000, got {n_mc}")));
    }
    let mut rng = rng::stream(seed, rng::STREAM_PRIOR_MC);
    let mut d: Vec<f64> = (0..n_mc).map(|_| set.distance(&prior(&mut rng))).collect();
    Ok(quantile_sorted(sort(&mut d), 0.5))
}

fn sort(v: &mut [f64]) -> &[f64] {
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Marginal summary of one coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    /// `beta` or `theta`.
    pub quantity: String,
    /// 1-based coordinate.
    pub index: usize,
    pub mean: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    /// Fraction of draws with `|x| ≤ 1e-12`.
    pub zero_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub credible_level: f64,
    pub rows: Vec<CoordinateSummary>,
}

impl Summary {
    pub fn theta(&self) -> impl Iterator<Item = &CoordinateSummary> {
        self.rows.iter().filter(|r| r.quantity == "theta")
    }

    pub fn beta(&self) -> impl Iterator<Item = &CoordinateSummary> {
        self.rows.iter().filter(|r| r.quantity == "beta")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["quantity", "index", "mean", "median", "lower", "upper", "zero_rate"])?;
        for r in &self.rows {
            out.write_record([
                r.quantity.clone(),
                r.index.to_string(),
                format!("{:.16e}", r.mean),
                format!("{:.16e}", r.median),
                format!("{:.16e}", r.lower),
                format!("{:.16e}", r.upper),
                format!("{:.16e}", r.zero_rate),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn summarize_draws(name: &str, draws: &[DVector<f64>], level: f64) -> Vec<CoordinateSummary> {
    let p = draws[0].len();
    let n = draws.len() as f64;
    let tail = (1.0 - level) / 2.0;
    (0..p)
        .map(|j| {
            let mut xs: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let zero_rate = xs.iter().filter(|x| x.abs() <= ZERO_TOL).count() as f64 / n;
            let s = sort(&mut xs);
            CoordinateSummary {
                quantity: name.to_string(),
                index: j + 1,
                mean,
                median: quantile_sorted(s, 0.5),
                lower: quantile_sorted(s, tail),
                upper: quantile_sorted(s, 1.0 - tail),
                zero_rate,
            }
        })
        .collect()
}

/// Mean, median, equal-tailed interval and exact-zero rate of every `β`
/// and `θ` coordinate.
pub fn summarize(chain: &Chain, credible_level: f64) -> Result<Summary> {
    if chain.is_empty() {
        return Err(Error::InvalidInput("cannot summarize an empty chain".into()));
    }
    if !(credible_level > 0.0 && credible_level < 1.0) {
        return Err(Error::InvalidInput("credible level must be in (0, 1)".into()));
    }
    let mut rows = summarize_draws("beta", &chain.beta_draws, credible_level);
    if !chain.theta_draws.is_empty() {
        rows.extend(summarize_draws("theta", &chain.theta_draws, credible_level));
    }
    Ok(Summary { credible_level, rows })
}

/// Posterior of the number of present factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorCountPosterior {
    /// Count in every draw.
    pub counts: Vec<usize>,
    /// Probability of `0..=d` factors.
    pub histogram: Vec<f64>,
    /// Most frequent count (smallest on ties).
    pub mode: usize,
}

impl FactorCountPosterior {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n_factors", "probability"])?;
        for (k, p) in self.histogram.iter().enumerate() {
            out.write_record([k.to_string(), format!("{p:.16e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Distribution of the number of factors with a non-zero loading row and a
/// non-zero flow.
pub fn factor_count_posterior(chain: &Chain, layout: &FlowLayout) -> Result<FactorCountPosterior> {
    if chain.theta_draws.is_empty() {
        return Err(Error::InvalidInput("chain has no theta draws".into()));
    }
    if let Some(t) = chain.theta_draws.iter().find(|t| t.len() != layout.dim()) {
        return Err(Error::Shape(format!(
            "theta draws have length {}, layout expects {}",
            t.len(),
            layout.dim()
        )));
    }
    let counts: Vec<usize> = chain.theta_draws.iter().map(|t| layout.factor_count(t)).collect();
    let mut histogram = vec![0.0; layout.d + 1];
    for &c in &counts {
        histogram[c] += 1.0;
    }
    let n = counts.len() as f64;
    histogram.iter_mut().for_each(|h| *h /= n);
    let mode = histogram
        .iter()
        .enumerate()
        .fold(0, |best, (k, p)| if *p > histogram[best] { k } else { best });
    Ok(FactorCountPosterior { counts, histogram, mode })
}

/// Comparison of posterior spread before and after the prox.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contraction {
    pub trace_theta: f64,
    pub trace_beta: f64,
    /// Bootstrap standard error of `trace_theta − trace_beta`.
    pub se: f64,
    /// `trace_theta ≤ trace_beta + 3 se`.
    pub holds: bool,
}

fn trace_cov(draws: &[&DVector<f64>]) -> f64 {
    let n = draws.len() as f64;
    let p = draws[0].len();
    let mut mean = DVector::zeros(p);
    for d in draws {
        mean += *d;
    }
    mean /= n;
    draws.iter().map(|d| (*d - &mean).norm_squared()).sum::<f64>() / (n - 1.0)
}

/// Checks `tr Cov(θ | y) ≤ tr Cov(β | y)` with a moving-block bootstrap
/// (block length `⌈√n⌉`) of the paired draws.
pub fn covariance_contraction(chain: &Chain, n_boot: usize, seed: u64) -> Result<Contraction> {
    let n = chain.len();
    if n < 3 || chain.theta_draws.len() != n {
        return Err(Error::InvalidInput("need at least 3 paired beta/theta draws".into()));
    }
    let all_b: Vec<&DVector<f64>> = chain.beta_draws.iter().collect();
    let all_t: Vec<&DVector<f64>> = chain.theta_draws.iter().collect();
    let trace_beta = trace_cov(&all_b);
    let trace_theta = trace_cov(&all_t);
    let block = (n as f64).sqrt().ceil() as usize;
    let mut rng = rng::stream(seed, rng::STREAM_BOOTSTRAP);
    let mut diffs = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let mut idx = Vec::with_capacity(n);
        while idx.len() < n {
            let start = rng.random_range(0..=n - block);
            idx.extend((start..start + block).take(n - idx.len()));
        }
        let b: Vec<&DVector<f64>> = idx.iter().map(|&i| all_b[i]).collect();
        let t: Vec<&DVector<f64>> = idx.iter().map(|&i| all_t[i]).collect();
        diffs.push(trace_cov(&t) - trace_cov(&b));
    }
    let se = if diffs.len() > 1 {
        let m = diffs.iter().sum::<f64>() / diffs.len() as f64;
        (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Contraction {
        trace_theta,
        trace_beta,
        se,
        holds: trace_theta - trace_beta <= 3.0 * se,
    })
}
