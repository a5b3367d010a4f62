//! Chain tables and their metadata sidecars.

use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{Chain, HmcConfig};
use crate::error::{Error, Result};

/// Key-value sidecar written next to a chain table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMetadata {
    pub model: String,
    pub seed: u64,
    pub chain_index: usize,
    pub lambda: Vec<f64>,
    pub accept_rate: f64,
    pub n_divergent: usize,
    pub step_size: f64,
    pub n_retained: usize,
    pub sampler: HmcConfig,
}

impl ChainMetadata {
    pub fn new(model: &str, chain: &Chain, cfg: &HmcConfig) -> Self {
        Self {
            model: model.to_string(),
            seed: chain.seed,
            chain_index: chain.chain_index,
            lambda: chain.lambda_used.clone(),
            accept_rate: chain.accept_rate,
            n_divergent: chain.n_divergent,
            step_size: chain.step_size,
            n_retained: chain.len(),
            sampler: cfg.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }
}

/// One row per retained draw: `beta_1 … beta_p`, then `theta_1 … theta_q`.
pub fn write_chain_csv<W: Write>(chain: &Chain, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let p = chain.beta_draws.first().map_or(0, |b| b.len());
    let q = chain.theta_draws.first().map_or(0, |t| t.len());
    let header: Vec<String> = (1..=p)
        .map(|j| format!("beta_{j}"))
        .chain((1..=q).map(|j| format!("theta_{j}")))
        .collect();
    out.write_record(&header)?;
    for (b, t) in chain.beta_draws.iter().zip(&chain.theta_draws) {
        out.write_record(b.iter().chain(t.iter()).map(|x| format!("{x:.16e}")))?;
    }
    out.flush()?;
    Ok(())
}

/// `(β draws, θ draws)`.
pub type Draws = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Reads a table from [`write_chain_csv`] back into its draws.
pub fn read_chain_csv<R: Read>(r: R) -> Result<Draws> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let p = header.iter().filter(|h| h.starts_with("beta_")).count();
    let q = header.iter().filter(|h| h.starts_with("theta_")).count();
    if p + q != header.len() {
        return Err(Error::Parse("chain table columns must be beta_* then theta_*".into()));
    }
    let mut betas = Vec::new();
    let mut thetas = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("bad number {s:?}: {e}"))))
            .collect::<Result<_>>()?;
        betas.push(DVector::from_column_slice(&vals[..p]));
        thetas.push(DVector::from_column_slice(&vals[p..]));
    }
    Ok((betas, thetas))
}
