//! Latent factor model for sequences of flow networks.
//!
//! `Y^{(t)} = Σ_l γ_l^{(t)} F^{(l)} + E^{(t)}` where every `F^{(l)}` is a
//! feasible flow (skew-symmetric off the diagonal, sparse edges, sparse net
//! in/out-flow on the diagonal) and the loading rows `γ_l` switch whole
//! factors on or off. Errors are independent `N(0, σ²)` on the entries
//! `i ≤ j`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Likelihood, Model, PriorBlock, ProxBlock};
use crate::admm::{build_flow_constraint_matrix, edge_index, n_edges, AdmmConfig, FlowNetwork};
use crate::error::{Error, Result};
use crate::linalg::{from_row_major, pinv, to_row_major, PINV_REL_TOL};
use crate::prox::ProxOperator;

/// A factor counts as present when both its loading row norm and its
/// largest flow exceed this.
pub const FACTOR_ACTIVE_TOL: f64 = 1e-6;

/// Packing of `β` (and `θ`): `d` edge blocks, the `d x T` loading block in
/// row-major order, then `log σ²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowLayout {
    pub n_nodes: usize,
    pub d: usize,
    pub t: usize,
}

impl FlowLayout {
    pub fn n_edges(&self) -> usize {
        n_edges(self.n_nodes)
    }

    pub fn factor_offset(&self, l: usize) -> usize {
        l * self.n_edges()
    }

    pub fn loadings_offset(&self) -> usize {
        self.d * self.n_edges()
    }

    pub fn log_sigma2_index(&self) -> usize {
        self.loadings_offset() + self.d * self.t
    }

    pub fn dim(&self) -> usize {
        self.log_sigma2_index() + 1
    }

    pub fn factor<'a>(&self, v: &'a DVector<f64>, l: usize) -> nalgebra::DVectorView<'a, f64> {
        v.rows(self.factor_offset(l), self.n_edges())
    }

    /// The `d x T` loading matrix.
    pub fn loadings(&self, v: &DVector<f64>) -> DMatrix<f64> {
        from_row_major(&v.rows(self.loadings_offset(), self.d * self.t).into_owned(), self.d, self.t)
    }

    /// Which factors are present in a `θ` vector.
    pub fn active_factors(&self, theta: &DVector<f64>) -> Vec<bool> {
        let g = self.loadings(theta);
        (0..self.d)
            .map(|l| g.row(l).norm() > FACTOR_ACTIVE_TOL && self.factor(theta, l).amax() > FACTOR_ACTIVE_TOL)
            .collect()
    }

    pub fn factor_count(&self, theta: &DVector<f64>) -> usize {
        self.active_factors(theta).into_iter().filter(|a| *a).count()
    }
}

/// Observed networks `Y^{(1..T)}`, each `n x n`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowData {
    pub n_nodes: usize,
    pub y: Vec<DMatrix<f64>>,
}

/// Row-major positions `(i, j)` with `i ≤ j`.
fn upper_positions(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

impl FlowData {
    pub fn new(y: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = y.first().map(|m| m.nrows()).unwrap_or(0);
        if n < 2 {
            return Err(Error::Shape("flow data needs at least one network with 2 or more nodes".into()));
        }
        if y.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Shape(format!("every network must be {n}x{n}")));
        }
        Ok(Self { n_nodes: n, y })
    }

    pub fn t(&self) -> usize {
        self.y.len()
    }

    /// Entries `i ≤ j` of every network, one column per time point.
    pub fn upper(&self) -> DMatrix<f64> {
        let pos = upper_positions(self.n_nodes);
        DMatrix::from_fn(pos.len(), self.t(), |r, t| self.y[t][pos[r]])
    }

    /// Variance of the `i ≤ j` entries.
    pub fn variance(&self) -> f64 {
        let u = self.upper();
        let mean = u.mean();
        u.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / u.len() as f64
    }
}

/// Maps an edge vector `z` to the entries `i ≤ j` of its flow matrix, with
/// the diagonal set to the net flow `Cz`.
fn upper_map(n: usize) -> DMatrix<f64> {
    let pos = upper_positions(n);
    let c = build_flow_constraint_matrix(n);
    let mut g = DMatrix::zeros(pos.len(), n_edges(n));
    for (r, &(i, j)) in pos.iter().enumerate() {
        if i == j {
            g.row_mut(r).copy_from(&c.row(i));
        } else {
            g[(r, edge_index(j, i))] = -1.0;
        }
    }
    g
}

#[derive(Clone, Debug)]
pub struct FlowFactorLikelihood {
    layout: FlowLayout,
    /// Observed `i ≤ j` entries, `q x T`.
    yu: DMatrix<f64>,
    /// `q x m` map from edges to upper entries.
    g: DMatrix<f64>,
}

impl FlowFactorLikelihood {
    pub fn new(data: &FlowData, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("factor budget d must be at least 1".into()));
        }
        if data.y.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidInput("flow data contains non-finite values".into()));
        }
        Ok(Self {
            layout: FlowLayout {
                n_nodes: data.n_nodes,
                d,
                t: data.t(),
            },
            yu: data.upper(),
            g: upper_map(data.n_nodes),
        })
    }

    pub fn layout(&self) -> FlowLayout {
        self.layout
    }

    fn edges(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let l = self.layout;
        DMatrix::from_fn(l.n_edges(), l.d, |e, k| theta[l.factor_offset(k) + e])
    }

    /// Fitted `i ≤ j` entries, `q x T`.
    fn fitted(&self, theta: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let u = &self.g * self.edges(theta);
        let gamma = self.layout.loadings(theta);
        let m = &u * &gamma;
        (u, gamma, m)
    }

    /// Mean networks `Σ_l γ_l^{(t)} F^{(l)}` implied by `θ`.
    pub fn mean_networks(&self, theta: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let l = self.layout;
        let gamma = l.loadings(theta);
        (0..l.t)
            .map(|t| {
                let mut m = DMatrix::zeros(l.n_nodes, l.n_nodes);
                for k in 0..l.d {
                    if gamma[(k, t)] != 0.0 {
                        let f = FlowNetwork::from_lower(l.factor(theta, k).into_owned())
                            .expect("layout edge count is triangular")
                            .to_matrix();
                        m += f * gamma[(k, t)];
                    }
                }
                m
            })
            .collect()
    }
}

impl Likelihood for FlowFactorLikelihood {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_lik(&self, theta: &DVector<f64>) -> f64 {
        let (_, _, m) = self.fitted(theta);
        let s = theta[self.layout.log_sigma2_index()];
        let ssr = (&self.yu - m).norm_squared();
        -0.5 * self.yu.len() as f64 * s - 0.5 * ssr * (-s).exp()
    }

    fn grad_log_lik(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.log_lik_and_grad(theta).1
    }

    fn log_lik_and_grad(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let l = self.layout;
        let (u, gamma, m) = self.fitted(theta);
        let s = theta[l.log_sigma2_index()];
        let inv = (-s).exp();
        let r = &self.yu - m;
        let ssr = r.norm_squared();
        let n_obs = self.yu.len() as f64;
        let mut grad = DVector::zeros(l.dim());
        let g_gamma = u.tr_mul(&r) * inv;
        grad.rows_mut(l.loadings_offset(), l.d * l.t).copy_from(&to_row_major(&g_gamma));
        let g_edges = self.g.tr_mul(&(&r * gamma.transpose())) * inv;
        for k in 0..l.d {
            grad.rows_mut(l.factor_offset(k), l.n_edges()).copy_from(&g_edges.column(k));
        }
        grad[l.log_sigma2_index()] = -0.5 * n_obs + 0.5 * ssr * inv;
        (-0.5 * n_obs * s - 0.5 * ssr * inv, grad)
    }
}

/// Settings of the flow factor model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowFactorOptions {
    /// Factor budget.
    pub d: usize,
    /// Edge sparsity scale.
    pub lambda1: f64,
    /// Net-flow (diagonal) sparsity scale.
    pub lambda2: f64,
    /// Group scale on the loading rows.
    pub lambda_load: f64,
    /// Project the loadings onto `γ ≥ 0` after the group prox.
    pub nonnegative_loadings: bool,
    /// Inverse-gamma prior on `σ²`.
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    pub admm: AdmmConfig,
}

impl Default for FlowFactorOptions {
    fn default() -> Self {
        Self {
            d: 6,
            lambda1: 0.5,
            lambda2: 0.5,
            lambda_load: 4.0,
            nonnegative_loadings: false,
            sigma2_shape: 2.0,
            sigma2_scale: 0.01,
            admm: AdmmConfig::default(),
        }
    }
}

/// Standard deviation of the jitter added to the spectral start.
const INIT_JITTER: f64 = 0.05;

/// `β` whose prox reproduces the leading rank-`d` SVD factors of the data,
/// every factor switched on, and `log σ²` at the residual variance of that
/// fit. Returns the start and the number of factors it covers.
///
/// Edges come from the pseudo-inverse of the edge-to-entry map, then move
/// outward by a subgradient of the flow penalty; loading rows are stretched
/// by `λ_load` so the group prox returns them unchanged.
fn spectral_start(lik: &FlowFactorLikelihood, opts: &FlowFactorOptions) -> Result<(DVector<f64>, usize)> {
    let layout = lik.layout;
    let r = layout.d.min(lik.yu.nrows()).min(lik.yu.ncols());
    let svd = lik.yu.clone().svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical {
            max_iterations: 0,
            rows: lik.yu.nrows(),
            cols: lik.yu.ncols(),
        }),
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let g_pinv = pinv(&lik.g, PINV_REL_TOL)?;
    let c = build_flow_constraint_matrix(layout.n_nodes);
    let mut beta = DVector::zeros(layout.dim());
    let mut fit = DMatrix::zeros(lik.yu.nrows(), lik.yu.ncols());
    for (l, &k) in order.iter().take(r).enumerate() {
        let s = svd.singular_values[k].sqrt();
        let mut col = u.column(k) * s;
        let mut row = vt.row(k).transpose() * s;
        if row.sum() < 0.0 {
            col = -col;
            row = -row;
        }
        fit += &col * row.transpose();
        let z = &g_pinv * &col;
        let sub = z.map(f64::signum) * opts.lambda1 + c.tr_mul(&(&c * &z).map(f64::signum)) * opts.lambda2;
        beta.rows_mut(layout.factor_offset(l), layout.n_edges()).copy_from(&(z + sub));
        let norm = row.norm();
        let stretch = if norm > 0.0 { 1.0 + opts.lambda_load / norm } else { 1.0 };
        beta.rows_mut(layout.loadings_offset() + l * layout.t, layout.t).copy_from(&(row * stretch));
    }
    let resid = (&lik.yu - fit).norm_squared() / lik.yu.len() as f64;
    beta[layout.log_sigma2_index()] = resid.max(1e-8).ln();
    Ok((beta, r))
}

/// Builds the flow factor model. Factor blocks are named `F1 … Fd`, the
/// loadings `rho`, the noise `log_sigma2`. Chains start near the leading
/// SVD factors of the data with all factors switched on (see
/// `spectral_start`); factors beyond the data rank start from prior draws.
pub fn make_flow_factor_model(data: &FlowData, opts: &FlowFactorOptions) -> Result<Model> {
    let lik = FlowFactorLikelihood::new(data, opts.d)?;
    let layout = lik.layout();
    let opts_load = opts.lambda_load;
    let m = layout.n_edges();
    if !(opts.sigma2_shape > 0.0 && opts.sigma2_scale > 0.0) {
        return Err(Error::InvalidInput("inverse-gamma parameters must be positive".into()));
    }
    let mut blocks = Vec::with_capacity(opts.d + 2);
    let mut prior = Vec::with_capacity(opts.d + 2);
    for l in 0..opts.d {
        let op = ProxOperator::flow(layout.n_nodes, opts.lambda1, opts.lambda2, opts.admm.clone())?;
        blocks.push(ProxBlock::new(&format!("F{}", l + 1), layout.factor_offset(l), m, Some(op)).calibrated());
        prior.push(PriorBlock::standard_normal(m));
    }
    let mut rho = ProxBlock::new(
        "rho",
        layout.loadings_offset(),
        opts.d * layout.t,
        Some(ProxOperator::group_row(opts.d, layout.t, opts.lambda_load)?),
    );
    rho.nonnegative = opts.nonnegative_loadings;
    blocks.push(rho);
    prior.push(PriorBlock::standard_normal(opts.d * layout.t));
    blocks.push(ProxBlock::new("log_sigma2", layout.log_sigma2_index(), 1, None));
    prior.push(PriorBlock::LogInverseGamma {
        shape: opts.sigma2_shape,
        scale: opts.sigma2_scale,
    });

    let model = Model::new("flow_factor", Arc::new(lik.clone()), blocks, prior)?.with_flow_layout(layout);
    let (base, spectral) = spectral_start(&lik, opts)?;
    let prior_model = model.clone();
    let init = move |rng: &mut ChaCha8Rng| {
        // spectral start for the leading factors, prior draws beyond them,
        // plus a small jitter so chains start apart
        let draw = prior_model.sample_prior(rng);
        let mut b = base.clone();
        let off = layout.loadings_offset();
        for l in spectral..layout.d {
            let f = layout.factor_offset(l);
            b.rows_mut(f, layout.n_edges()).copy_from(&draw.rows(f, layout.n_edges()));
            let row = draw.rows(off + l * layout.t, layout.t);
            let n = row.norm();
            if n > 0.0 {
                b.rows_mut(off + l * layout.t, layout.t).copy_from(&(row * ((opts_load + 1.0) / n)));
            }
        }
        let s = layout.log_sigma2_index();
        for i in 0..s {
            b[i] += INIT_JITTER * rng.sample::<f64, _>(StandardNormal);
        }
        b
    };
    Ok(model.with_init(Arc::new(init)))
}

/// Synthetic data: each true factor is a directed cycle, so it conserves
/// flow at every node and has no external flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticFlowSpec {
    pub n_nodes: usize,
    pub t: usize,
    pub n_factors: usize,
    pub min_cycle: usize,
    pub max_cycle: usize,
    /// Uniform range of the cycle flow.
    pub flow_range: (f64, f64),
    /// Uniform range of the (positive) loadings.
    pub loading_range: (f64, f64),
    pub noise_sd: f64,
}

impl Default for SyntheticFlowSpec {
    fn default() -> Self {
        Self {
            n_nodes: 10,
            t: 8,
            n_factors: 2,
            min_cycle: 3,
            max_cycle: 5,
            flow_range: (1.0, 2.0),
            loading_range: (1.0, 2.0),
            noise_sd: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticFlow {
    pub data: FlowData,
    pub factors: Vec<FlowNetwork>,
    /// `n_factors x T`.
    pub loadings: DMatrix<f64>,
    /// Noise-free networks.
    pub mean: Vec<DMatrix<f64>>,
}

pub fn synthetic_flow_data(spec: &SyntheticFlowSpec, rng: &mut ChaCha8Rng) -> Result<SyntheticFlow> {
    let n = spec.n_nodes;
    if n < 3 || spec.t == 0 {
        return Err(Error::InvalidInput("synthetic flows need at least 3 nodes and 1 time point".into()));
    }
    if !(3 <= spec.min_cycle && spec.min_cycle <= spec.max_cycle && spec.max_cycle <= n) {
        return Err(Error::InvalidInput(format!(
            "cycle lengths must satisfy 3 <= min <= max <= {n}"
        )));
    }
    let (f0, f1) = spec.flow_range;
    let (g0, g1) = spec.loading_range;
    if !(0.0 < f0 && f0 <= f1 && 0.0 < g0 && g0 <= g1 && spec.noise_sd >= 0.0) {
        return Err(Error::InvalidInput("flow and loading ranges must be positive and ordered".into()));
    }
    let mut nodes: Vec<usize> = (0..n).collect();
    let mut factors = Vec::with_capacity(spec.n_factors);
    for _ in 0..spec.n_factors {
        let len = rng.random_range(spec.min_cycle..=spec.max_cycle);
        nodes.shuffle(rng);
        let w = rng.random_range(f0..=f1);
        let mut f = DMatrix::zeros(n, n);
        for k in 0..len {
            let (a, b) = (nodes[k], nodes[(k + 1) % len]);
            f[(a, b)] += w;
            f[(b, a)] -= w;
        }
        factors.push(FlowNetwork::from_lower(FlowNetwork::from_matrix(&f)?.lower)?);
    }
    let loadings = DMatrix::from_fn(spec.n_factors, spec.t, |_, _| rng.random_range(g0..=g1));
    let mut mean = Vec::with_capacity(spec.t);
    let mut y = Vec::with_capacity(spec.t);
    for t in 0..spec.t {
        let mut m = DMatrix::zeros(n, n);
        for (l, f) in factors.iter().enumerate() {
            m += f.to_matrix() * loadings[(l, t)];
        }
        let mut obs = m.clone();
        for i in 0..n {
            for j in i..n {
                let e = spec.noise_sd * rng.sample::<f64, _>(StandardNormal);
                obs[(i, j)] += e;
                if i != j {
                    obs[(j, i)] = -obs[(i, j)];
                }
            }
        }
        mean.push(m);
        y.push(obs);
    }
    Ok(SyntheticFlow {
        data: FlowData::new(y)?,
        factors,
        loadings,
        mean,
    })
}

/// Reads `t,i,j,flow` rows (1-based `t`, `i`, `j`, header required).
///
/// If every off-diagonal row has `i > j` the file is a lower-triangular
/// feasible flow and the upper triangle is filled by skew-symmetry.
/// Otherwise the rows are raw `(i, j)` pairs and the off-diagonal part is
/// antisymmetrised, `(Y − Yᵀ)/2`. Rows with `i = j` set the diagonal.
pub fn read_flow_csv<R: Read>(r: R) -> Result<FlowData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut entries: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    let (mut n, mut t_max) = (0usize, 0usize);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Parse(format!("row {}: expected 4 columns (t,i,j,flow)", line + 2)));
        }
        let idx = |k: usize, what: &str| -> Result<usize> {
            let v: usize = rec[k]
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: {what} = {:?} is not a positive integer", line + 2, &rec[k])))?;
            if v == 0 {
                return Err(Error::Parse(format!("row {}: {what} indices are 1-based", line + 2)));
            }
            Ok(v - 1)
        };
        let (t, i, j) = (idx(0, "t")?, idx(1, "i")?, idx(2, "j")?);
        let v: f64 = rec[3]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: flow {:?} is not a number", line + 2, &rec[3])))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("row {}: flow is not finite", line + 2)));
        }
        n = n.max(i + 1).max(j + 1);
        t_max = t_max.max(t + 1);
        entries.insert((t, i, j), v);
    }
    if entries.is_empty() {
        return Err(Error::Parse("flow file has no rows".into()));
    }
    let raw = entries.keys().any(|&(_, i, j)| i < j);
    let mut y = vec![DMatrix::zeros(n, n); t_max];
    for (&(t, i, j), &v) in &entries {
        y[t][(i, j)] = v;
    }
    for m in &mut y {
        for i in 0..n {
            for j in 0..i {
                let (lo, up) = (m[(i, j)], m[(j, i)]);
                let z = if raw { 0.5 * (lo - up) } else { lo };
                m[(i, j)] = z;
                m[(j, i)] = -z;
            }
        }
    }
    FlowData::new(y)
}

/// Writes `t,i,j,flow` rows with 1-based indices: the lower triangle plus
/// the diagonal when `lower_only`, every entry otherwise. Zero off-diagonal
/// entries are skipped; the diagonal is always written so the node count
/// and horizon survive an all-zero network.
pub fn write_flow_csv<W: Write>(data: &FlowData, w: W, lower_only: bool) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "i", "j", "flow"])?;
    let n = data.n_nodes;
    for (t, m) in data.y.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                if (lower_only && j > i) || (i != j && m[(i, j)] == 0.0) {
                    continue;
                }
                out.write_record([
                    (t + 1).to_string(),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    format!("{:.16e}", m[(i, j)]),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn upper_map_reproduces_matrix_entries() {
        let z = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.3, 0.0, -0.7]);
        let f = FlowNetwork::from_lower(z.clone()).unwrap().to_matrix();
        let u = upper_map(4) * &z;
        for (r, (i, j)) in upper_positions(4).into_iter().enumerate() {
            assert!((u[r] - f[(i, j)]).abs() < 1e-15);
        }
    }

    #[test]
    fn synthetic_factors_conserve_flow() {
        let mut r = rng::stream(1, rng::STREAM_DATA);
        let s = synthetic_flow_data(&SyntheticFlowSpec::default(), &mut r).unwrap();
        for f in &s.factors {
            assert!(f.diag.amax() < 1e-12);
            assert!(f.lower.amax() > 0.0);
        }
        assert_eq!(s.data.t(), 8);
    }

    #[test]
    fn lower_and_raw_files_agree() {
        let lower = "t,i,j,flow\n1,2,1,1.5\n1,3,2,-0.5\n1,3,3,0.25\n";
        let raw = "t,i,j,flow\n1,2,1,1.5\n1,1,2,-1.5\n1,3,2,-1.0\n1,2,3,0.0\n1,3,3,0.25\n";
        let a = read_flow_csv(lower.as_bytes()).unwrap();
        let b = read_flow_csv(raw.as_bytes()).unwrap();
        assert_eq!(a.y[0][(0, 1)], -1.5);
        assert_eq!(a.y[0][(2, 2)], 0.25);
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(read_flow_csv("t,i,j,flow\n1,x,1,2\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_flow_csv("t,i,j,flow\n1,0,1,2\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_flow_csv("t,i,j,flow\n1,2,1\n".as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn zero_loadings_silence_factor() {
        let mut r = rng::stream(3, rng::STREAM_DATA);
        let s = synthetic_flow_data(&SyntheticFlowSpec { n_nodes: 5, t: 3, ..Default::default() }, &mut r).unwrap();
        let lik = FlowFactorLikelihood::new(&s.data, 2).unwrap();
        let lay = lik.layout();
        let mut theta = DVector::from_fn(lay.dim(), |i, _| (i as f64 * 0.37).sin());
        for t in 0..lay.t {
            theta[lay.loadings_offset() + t] = 0.0;
        }
        let base = lik.log_lik(&theta);
        for e in 0..lay.n_edges() {
            theta[e] += 1.0;
        }
        assert_eq!(lik.log_lik(&theta), base);
    }
}
