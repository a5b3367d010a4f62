//! Effective sample size and split R-hat.

use serde::Serialize;

use super::Chain;
use crate::error::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size by Geyer's initial monotone sequence estimator.
/// `None` when the draws have no spread.
pub fn ess(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 4 {
        return None;
    }
    let m = mean(x);
    let c0 = autocov(x, m, 0);
    if !(c0 > 1e-300) || !c0.is_finite() {
        return None;
    }
    // sums of adjacent autocorrelation pairs Γ_k = ρ_{2k} + ρ_{2k+1}
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let g = (autocov(x, m, 2 * k) + autocov(x, m, 2 * k + 1)) / c0;
        if g <= 0.0 {
            break;
        }
        let g = g.min(prev);
        sum += g;
        prev = g;
        k += 1;
    }
    let tau = -1.0 + 2.0 * sum;
    Some(n as f64 / tau.max(1.0 / (n as f64).log10().max(1.0)))
}

/// Split R-hat over chains of equal length; `None` when there is no
/// within-chain variation.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let n = chains.first()?.len() / 2;
    if n < 2 {
        return None;
    }
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..n], &c[c.len() - n..]]).collect();
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let vars: Vec<f64> = halves
        .iter()
        .zip(&means)
        .map(|(h, m)| h.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64)
        .collect();
    let w = mean(&vars);
    if !(w > 0.0) {
        return None;
    }
    let grand = mean(&means);
    let k = halves.len() as f64;
    let b = n as f64 * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    Some((var_plus / w).sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct CoordinateDiagnostics {
    /// Summed over chains; `None` if degenerate.
    pub ess: Option<f64>,
    pub rhat: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub n_chains: usize,
    pub draws_per_chain: usize,
    /// Per `β` coordinate.
    pub coordinates: Vec<CoordinateDiagnostics>,
    pub accept_rates: Vec<f64>,
    pub n_divergent: Vec<usize>,
}

impl Diagnostics {
    pub fn min_ess(&self) -> Option<f64> {
        self.coordinates.iter().filter_map(|c| c.ess).min_by(f64::total_cmp)
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.coordinates.iter().filter_map(|c| c.rhat).max_by(f64::total_cmp)
    }
}

/// Per-coordinate ESS and split R-hat of the `β` draws.
pub fn diagnostics(chains: &[Chain]) -> Result<Diagnostics> {
    let first = chains
        .first()
        .ok_or_else(|| Error::InvalidInput("diagnostics need at least one chain".into()))?;
    let n = first.beta_draws.len();
    if chains.iter().any(|c| c.beta_draws.len() != n) {
        return Err(Error::Shape("chains have different numbers of draws".into()));
    }
    let p = first.beta_draws.first().map(|b| b.len()).unwrap_or(0);
    let coordinates = (0..p)
        .map(|j| {
            let series: Vec<Vec<f64>> = chains.iter().map(|c| c.beta_draws.iter().map(|b| b[j]).collect()).collect();
            let per: Vec<Option<f64>> = series.iter().map(|s| ess(s)).collect();
            let ess = if per.iter().all(Option::is_some) {
                Some(per.iter().flatten().sum())
            } else {
                None
            };
            CoordinateDiagnostics {
                ess,
                rhat: split_rhat(&series),
            }
        })
        .collect();
    Ok(Diagnostics {
        n_chains: chains.len(),
        draws_per_chain: n,
        coordinates,
        accept_rates: chains.iter().map(|c| c.accept_rate).collect(),
        n_divergent: chains.iter().map(|c| c.n_divergent).collect(),
    })
}
