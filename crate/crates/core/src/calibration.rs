//! Calibrating the scale λ through the deformation it causes.
//!
//! The deformation of a prox at scale λ is
//!
//! ```text
//! ω_λ = E‖β − prox_λ(β)‖ / E‖β − prox_∞(β)‖,
//! ```
//!
//! a number in `[0, 1]` that grows with λ. Putting a Beta prior on ω and
//! inverting the curve `λ ↦ ω_λ` gives a prior on λ that is interpretable
//! across operators.

use std::io::{Read, Write};

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::prox::ProxOperator;
use crate::rng;

/// Denominators below this mean the prox does not move with λ.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// Stop growing the default grid once ω̂ reaches this level.
pub const GRID_CAP_OMEGA: f64 = 0.999;

pub const DEFAULT_GRID_POINTS: usize = 50;
pub const DEFAULT_GRID_MIN: f64 = 1e-3;

/// Monotone table of `(λ, ω̂)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationCurve {
    pub lambdas: Vec<f64>,
    /// Isotonic, clamped to `[0, 1]`.
    pub omegas: Vec<f64>,
    /// Estimates before isotonic cleanup.
    pub raw_omegas: Vec<f64>,
    pub n_mc: usize,
    pub seed: u64,
}

/// Draws `n` prior samples from the calibration stream of `seed`.
pub fn draw_prior<F>(mut sampler: F, n: usize, seed: u64) -> Vec<DVector<f64>>
where
    F: FnMut(&mut ChaCha8Rng) -> DVector<f64>,
{
    let mut rng = rng::stream(seed, rng::STREAM_CALIBRATION);
    (0..n).map(|_| sampler(&mut rng)).collect()
}

fn mean_displacement(op: &ProxOperator, draws: &[DVector<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for b in draws {
        total += (b - op.evaluate(b)?).norm();
    }
    Ok(total / draws.len() as f64)
}

fn mean_limit_displacement(op: &ProxOperator, draws: &[DVector<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for b in draws {
        total += (b - op.limit_point(b)?).norm();
    }
    let d = total / draws.len() as f64;
    if d < DEGENERATE_DENOMINATOR {
        return Err(Error::DegenerateOperator(format!(
            "{} barely moves the prior draws even as lambda grows (mean limit displacement {d:.3e}); \
             fix lambda instead of calibrating it",
            op.name()
        )));
    }
    Ok(d)
}

/// Deformation of `op` on a fixed set of prior draws.
pub fn deformation_on(op: &ProxOperator, draws: &[DVector<f64>]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::InvalidInput("need at least one prior draw".into()));
    }
    let den = mean_limit_displacement(op, draws)?;
    Ok((mean_displacement(op, draws)? / den).clamp(0.0, 1.0))
}

/// Monte Carlo deformation `ω̂_λ` of `op` with numerator and denominator
/// sharing the same `n_mc` prior draws.
pub fn estimate_deformation<F>(op: &ProxOperator, prior: F, n_mc: usize, seed: u64) -> Result<f64>
where
    F: FnMut(&mut ChaCha8Rng) -> DVector<f64>,
{
    if n_mc == 0 {
        return Err(Error::InvalidInput("n_mc must be positive".into()));
    }
    deformation_on(op, &draw_prior(prior, n_mc, seed))
}

/// Pool-adjacent-violators fit of a non-decreasing sequence.
pub fn isotonic(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / n0 as f64 <= s1 / n1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, n0 + n1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, n)| std::iter::repeat_n(s / n as f64, n))
        .collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidInput("a deformation curve needs at least 2 grid points".into()));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::InvalidInput("grid points must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Deformation curve over `grid` for the operator family `family(λ)`.
///
/// All grid points share one set of prior draws; grid points are evaluated
/// in parallel.
pub fn build_curve<Fam, F>(family: Fam, prior: F, grid: &[f64], n_mc: usize, seed: u64) -> Result<DeformationCurve>
where
    Fam: Fn(f64) -> Result<ProxOperator> + Sync,
    F: FnMut(&mut ChaCha8Rng) -> DVector<f64>,
{
    check_grid(grid)?;
    if n_mc == 0 {
        return Err(Error::InvalidInput("n_mc must be positive".into()));
    }
    let draws = draw_prior(prior, n_mc, seed);
    curve_on(&family, &draws, grid, seed)
}

fn curve_on<Fam>(family: &Fam, draws: &[DVector<f64>], grid: &[f64], seed: u64) -> Result<DeformationCurve>
where
    Fam: Fn(f64) -> Result<ProxOperator> + Sync,
{
    let den = mean_limit_displacement(&family(grid[grid.len() - 1])?, draws)?;
    let raw: Vec<f64> = grid
        .par_iter()
        .map(|&l| Ok((mean_displacement(&family(l)?, draws)? / den).clamp(0.0, 1.0)))
        .collect::<Result<_>>()?;
    let omegas = isotonic(&raw).into_iter().map(|w| w.clamp(0.0, 1.0)).collect();
    Ok(DeformationCurve {
        lambdas: grid.to_vec(),
        omegas,
        raw_omegas: raw,
        n_mc: draws.len(),
        seed,
    })
}

/// `points` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// The default curve: [`DEFAULT_GRID_POINTS`] log-spaced points from
/// [`DEFAULT_GRID_MIN`] up to the first power of two where ω̂ ≥
/// [`GRID_CAP_OMEGA`].
pub fn build_default_curve<Fam, F>(family: Fam, prior: F, n_mc: usize, seed: u64) -> Result<DeformationCurve>
where
    Fam: Fn(f64) -> Result<ProxOperator> + Sync,
    F: FnMut(&mut ChaCha8Rng) -> DVector<f64>,
{
    if n_mc == 0 {
        return Err(Error::InvalidInput("n_mc must be positive".into()));
    }
    let draws = draw_prior(prior, n_mc, seed);
    let mut cap = 1.0;
    for _ in 0..64 {
        if deformation_on(&family(cap)?, &draws)? >= GRID_CAP_OMEGA {
            break;
        }
        cap *= 2.0;
    }
    let grid = log_grid(DEFAULT_GRID_MIN, cap, DEFAULT_GRID_POINTS);
    curve_on(&family, &draws, &grid, seed)
}

impl DeformationCurve {
    /// Smallest λ on the piecewise-linear curve with deformation `omega`,
    /// clamped to the grid ends outside the curve's range.
    pub fn lambda_from_omega(&self, omega: f64) -> f64 {
        let k = self.omegas.partition_point(|w| *w < omega);
        if k == 0 {
            return self.lambdas[0];
        }
        if k == self.omegas.len() {
            return self.lambdas[k - 1];
        }
        let (w0, w1) = (self.omegas[k - 1], self.omegas[k]);
        let (l0, l1) = (self.lambdas[k - 1], self.lambdas[k]);
        l0 + (omega - w0) / (w1 - w0) * (l1 - l0)
    }

    /// Piecewise-linear `ω` at `lambda`, constant beyond the grid.
    pub fn omega_at(&self, lambda: f64) -> f64 {
        let k = self.lambdas.partition_point(|l| *l < lambda);
        if k == 0 {
            return self.omegas[0];
        }
        if k == self.lambdas.len() {
            return self.omegas[k - 1];
        }
        let (l0, l1) = (self.lambdas[k - 1], self.lambdas[k]);
        let (w0, w1) = (self.omegas[k - 1], self.omegas[k]);
        w0 + (lambda - l0) / (l1 - l0) * (w1 - w0)
    }

    /// Draws `ω ~ Beta(a, b)` and maps it back to λ.
    pub fn sample_lambda<R: Rng + ?Sized>(&self, a_omega: f64, b_omega: f64, rng: &mut R) -> Result<f64> {
        let beta = Beta::new(a_omega, b_omega)
            .map_err(|e| Error::InvalidInput(format!("Beta({a_omega}, {b_omega}): {e}")))?;
        Ok(self.lambda_from_omega(beta.sample(rng)))
    }

    /// Writes `lambda,omega` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lambda", "omega"])?;
        for (l, o) in self.lambdas.iter().zip(&self.omegas) {
            out.write_record([format!("{l:.16e}"), format!("{o:.16e}")])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a table written by [`write_csv`](Self::write_csv); the Monte
    /// Carlo provenance is not part of the table.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut lambdas = Vec::new();
        let mut omegas = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Parse("curve rows need two columns".into()))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad number in curve table: {e}")))
            };
            lambdas.push(parse(0)?);
            omegas.push(parse(1)?);
        }
        check_grid(&lambdas)?;
        if omegas.windows(2).any(|w| w[1] < w[0]) || omegas.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Parse("curve omegas must be non-decreasing in [0, 1]".into()));
        }
        Ok(Self {
            lambdas,
            raw_omegas: omegas.clone(),
            omegas,
            n_mc: 0,
            seed: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pava_pools_violators() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(isotonic(&[0.1, 0.2]), vec![0.1, 0.2]);
    }

    fn toy() -> DeformationCurve {
        DeformationCurve {
            lambdas: vec![0.5, 1.0, 2.0, 3.0],
            omegas: vec![0.2, 0.4, 0.4, 0.8],
            raw_omegas: vec![0.2, 0.4, 0.4, 0.8],
            n_mc: 1,
            seed: 0,
        }
    }

    #[test]
    fn inverse_takes_left_end_of_flat_segment() {
        assert_eq!(toy().lambda_from_omega(0.4), 1.0);
        assert!((toy().lambda_from_omega(0.6) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn inverse_clamps() {
        assert_eq!(toy().lambda_from_omega(0.01), 0.5);
        assert_eq!(toy().lambda_from_omega(0.99), 3.0);
    }

    #[test]
    fn bad_grids_rejected() {
        assert!(check_grid(&[1.0]).is_err());
        assert!(check_grid(&[1.0, 1.0]).is_err());
        assert!(check_grid(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = toy();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = DeformationCurve::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.lambdas, c.lambdas);
        assert_eq!(back.omegas, c.omegas);
    }
}
