//! The five subcommands as library functions. Each writes its tables into
//! `cfg.out` (created if needed) next to a copy of the effective config.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::{read_matrix_csv, HyperPrior, RunConfig, SampleModel};
use crate::admm::FlowNetwork;
use crate::calibration::{build_curve, build_default_curve, DeformationCurve};
use crate::error::{Error, Result};
use crate::inference::{
    balanced_lambda, bayes_factor_for_model, covariance_contraction, factor_count_posterior, quantile_sorted, summarize,
    FactorCountPosterior, HypothesisResult, Summary,
};
use crate::models::{
    make_affine_mean_model, make_flow_factor_model, make_gaussian_mean_model, make_sparse_regression_model,
    read_flow_csv, synthetic_flow_data, write_flow_csv, FlowData, Model, SET_EXPANSION_PRIOR_SD,
};
use crate::prox::{AffineConstraint, ConvexSetSpec, ProxKind};
use crate::rng;
use crate::sampler::{diagnostics, read_chain_csv, run_chains, write_chain_csv, Chain, ChainMetadata, HmcConfig, LambdaPolicy};

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn prepare_out(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out)?;
    write_text(&cfg.out, "config.toml", &cfg.to_toml_string()?)?;
    Ok(&cfg.out)
}

fn sampler_config(cfg: &RunConfig, base: &HmcConfig) -> HmcConfig {
    HmcConfig {
        seed: cfg.seed,
        ..base.clone()
    }
}

fn write_chains(dir: &Path, model: &Model, chains: &[Chain], hmc: &HmcConfig) -> Result<()> {
    for c in chains {
        let k = c.chain_index;
        write_chain_csv(c, create(dir, &format!("chain_{k}.csv"))?)?;
        write_text(dir, &format!("chain_{k}.toml"), &ChainMetadata::new(&model.name, c, hmc).to_toml()?)?;
    }
    Ok(())
}

fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, prefix: &str, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record((1..=m.ncols()).map(|j| format!("{prefix}{j}")))?;
    for i in 0..m.nrows() {
        out.write_record(m.row(i).iter().map(|x| format!("{x:.16e}")))?;
    }
    out.flush()?;
    Ok(())
}

fn gaussian_rows(theta0: &[f64], n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, theta0.len(), |_, j| theta0[j] + sigma * rng.sample::<f64, _>(StandardNormal))
}

fn mean_data(data: &Option<PathBuf>, theta0: &[f64], n: usize, sigma: f64, seed: u64) -> Result<(DMatrix<f64>, bool)> {
    match data {
        Some(p) => Ok((read_matrix_csv(p)?, false)),
        None => {
            if n == 0 || theta0.is_empty() {
                return Err(Error::Config("synthetic data needs n > 0 and a non-empty theta0".into()));
            }
            let mut rng = rng::stream(seed, rng::STREAM_DATA);
            Ok((gaussian_rows(theta0, n, sigma, &mut rng), true))
        }
    }
}

/// Writes `lambda,omega` rows and the histogram of λ under `ω ~ Beta(a, b)`.
#[derive(Clone, Debug)]
pub struct CalibrationRun {
    pub curve: DeformationCurve,
    /// `(lower edge, upper edge, density)` per bin.
    pub density: Vec<(f64, f64, f64)>,
}

#[derive(Serialize)]
struct CalibrationSidecar<'a> {
    family: &'a super::config::OperatorFamily,
    prior_sd: f64,
    n_mc: usize,
    seed: u64,
    omega_a: f64,
    omega_b: f64,
    density_draws: usize,
}

/// Deformation curve of the configured operator family under
/// `β ~ N(0, prior_sd² I)`, plus plot data for the induced λ density.
pub fn run_calibrate(cfg: &RunConfig) -> Result<CalibrationRun> {
    let c = &cfg.calibrate;
    if !(c.prior_sd > 0.0 && c.prior_sd.is_finite()) {
        return Err(Error::Config("calibrate.prior_sd must be positive".into()));
    }
    if c.density_bins == 0 || c.density_draws == 0 {
        return Err(Error::Config("density_bins and density_draws must be positive".into()));
    }
    let p = c.family.dim()?;
    let sd = c.prior_sd;
    let prior = move |r: &mut ChaCha8Rng| DVector::from_fn(p, |_, _| sd * r.sample::<f64, _>(StandardNormal));
    let family = |l: f64| c.family.operator(l);
    info!("calibrating {:?} with {} prior draws", c.family, c.n_mc);
    let curve = match &c.grid {
        Some(g) => build_curve(family, prior, g, c.n_mc, cfg.seed),
        None => build_default_curve(family, prior, c.n_mc, cfg.seed),
    }
    .map_err(|e| match e {
        Error::DegenerateOperator(m) => Error::DegenerateOperator(format!(
            "{m}; this operator does not change with λ, so there is no scale to calibrate. \
             Fix the operator directly or pick a family whose output depends on λ"
        )),
        e => e,
    })?;

    let mut rng = rng::stream(cfg.seed, rng::STREAM_LAMBDA);
    let mut draws = (0..c.density_draws)
        .map(|_| curve.sample_lambda(c.omega_a, c.omega_b, &mut rng))
        .collect::<Result<Vec<f64>>>()?;
    draws.sort_by(f64::total_cmp);
    let hi = quantile_sorted(&draws, 0.99).max(f64::MIN_POSITIVE);
    let width = hi / c.density_bins as f64;
    let mut counts = vec![0usize; c.density_bins];
    for &l in &draws {
        let b = (l / width) as usize;
        if b < c.density_bins {
            counts[b] += 1;
        }
    }
    let n = draws.len() as f64;
    let density: Vec<(f64, f64, f64)> = counts
        .iter()
        .enumerate()
        .map(|(k, &m)| (k as f64 * width, (k + 1) as f64 * width, m as f64 / (n * width)))
        .collect();

    let dir = prepare_out(cfg)?;
    curve.write_csv(create(dir, "curve.csv")?)?;
    let mut out = csv::Writer::from_writer(create(dir, "lambda_density.csv")?);
    out.write_record(["lambda_lo", "lambda_hi", "density"])?;
    for (lo, hi, d) in &density {
        out.write_record([format!("{lo:.16e}"), format!("{hi:.16e}"), format!("{d:.16e}")])?;
    }
    out.flush()?;
    let side = CalibrationSidecar {
        family: &c.family,
        prior_sd: c.prior_sd,
        n_mc: c.n_mc,
        seed: cfg.seed,
        omega_a: c.omega_a,
        omega_b: c.omega_b,
        density_draws: c.density_draws,
    };
    write_text(dir, "calibration.toml", &toml::to_string(&side)?)?;
    Ok(CalibrationRun { curve, density })
}

fn build_sample_model(cfg: &RunConfig) -> Result<(Model, Option<DMatrix<f64>>)> {
    let seed = cfg.seed;
    Ok(match &cfg.sample.model {
        SampleModel::GaussianMean {
            data,
            theta0,
            n,
            sigma,
            set,
            lambda,
        } => {
            let (y, synthetic) = mean_data(data, theta0, *n, *sigma, seed)?;
            let m = make_gaussian_mean_model(&y, *sigma, set.build()?, *lambda)?;
            (m, synthetic.then_some(y))
        }
        SampleModel::AffineMean {
            data,
            theta0,
            n,
            sigma,
            normal,
            offset,
        } => {
            let (y, synthetic) = mean_data(data, theta0, *n, *sigma, seed)?;
            let m = make_affine_mean_model(&y, *sigma, AffineConstraint::hyperplane(normal, *offset)?)?;
            (m, synthetic.then_some(y))
        }
        SampleModel::SparseRegression {
            data,
            coefficients,
            n,
            sigma,
            lambda,
        } => {
            let (x, y, table) = match data {
                Some(p) => {
                    let t = read_matrix_csv(p)?;
                    if t.ncols() < 2 {
                        return Err(Error::Shape("regression data needs a y column and at least one x column".into()));
                    }
                    (t.columns(1, t.ncols() - 1).into_owned(), t.column(0).into_owned(), None)
                }
                None => {
                    let p = coefficients.len();
                    if *n == 0 || p == 0 {
                        return Err(Error::Config("synthetic regression needs n > 0 and coefficients".into()));
                    }
                    let mut rng = rng::stream(seed, rng::STREAM_DATA);
                    let x = DMatrix::from_fn(*n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let noise = DVector::from_fn(*n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
                    let y = &x * DVector::from_column_slice(coefficients) + noise;
                    let mut t = DMatrix::zeros(*n, p + 1);
                    t.set_column(0, &y);
                    t.columns_mut(1, p).copy_from(&x);
                    (x, y, Some(t))
                }
            };
            (make_sparse_regression_model(x, y, *sigma, *lambda)?, table)
        }
    })
}

fn hyper_policy(model: &Model, h: &HyperPrior, seed: u64) -> Result<LambdaPolicy> {
    let curve = build_default_curve(|l| model.calibrated_operator(l), |r| model.sample_prior(r), h.n_mc, seed)?;
    Ok(if h.per_iteration {
        LambdaPolicy::PerIteration {
            curve,
            a: h.omega_a,
            b: h.omega_b,
        }
    } else {
        LambdaPolicy::PerChain {
            curve,
            a: h.omega_a,
            b: h.omega_b,
        }
    })
}

/// Posterior sampling for one of the closed-form models.
pub fn run_sample(cfg: &RunConfig) -> Result<Vec<Chain>> {
    let (model, data) = build_sample_model(cfg)?;
    let hmc = sampler_config(cfg, &cfg.sample.sampler);
    let policy = match &cfg.sample.hyper {
        Some(h) => hyper_policy(&model, h, cfg.seed)?,
        None => LambdaPolicy::Fixed,
    };
    info!("sampling {} with {} chain(s)", model.name, cfg.chains);
    let chains = run_chains(&model, &hmc, &policy, cfg.chains)?;
    let dir = prepare_out(cfg)?;
    if let Some(d) = &data {
        let prefix = if matches!(cfg.sample.model, SampleModel::SparseRegression { .. }) { "col_" } else { "y_" };
        write_matrix_csv(d, prefix, create(dir, "data.csv")?)?;
    }
    write_chains(dir, &model, &chains, &hmc)?;
    let pooled = Chain::pooled(&chains);
    summarize(&pooled, cfg.sample.credible_level)?.write_csv(create(dir, "summary.csv")?)?;
    write_text(dir, "diagnostics.toml", &toml::to_string(&diagnostics(&chains)?)?)?;
    Ok(chains)
}

/// End-to-end set-expansion test of `θ ∈ {normalᵀθ = offset}`: data,
/// sampling, Bayes factor, and the θ draws for a scatter plot.
pub fn run_test(cfg: &RunConfig) -> Result<HypothesisResult> {
    let t = &cfg.test;
    let spec = ConvexSetSpec::Hyperplane {
        normal: t.normal.clone(),
        offset: t.offset,
    };
    let set = spec.build()?;
    let (y, synthetic) = mean_data(&t.data, &t.theta0, t.n, t.sigma, cfg.seed)?;
    let lambda = if t.balanced_lambda {
        let p = set.dim();
        let l = balanced_lambda(
            &set,
            |r| DVector::from_fn(p, |_, _| SET_EXPANSION_PRIOR_SD * r.sample::<f64, _>(StandardNormal)),
            t.balanced_mc,
            cfg.seed,
        )?;
        info!("balanced lambda = {l}");
        l
    } else {
        t.lambda.ok_or_else(|| {
            Error::Config("test needs either `lambda` or `balanced_lambda = true`".into())
        })?
    };
    let model = make_gaussian_mean_model(&y, t.sigma, set.clone(), lambda)?;
    let hmc = sampler_config(cfg, &t.sampler);
    let chains = run_chains(&model, &hmc, &LambdaPolicy::Fixed, cfg.chains)?;
    let pooled = Chain::pooled(&chains);
    let result = bayes_factor_for_model(&pooled, &model, t.prior_mc, cfg.seed)?;
    info!("BF01 = {} ({:?})", result.bf01, result.flag);

    let dir = prepare_out(cfg)?;
    if synthetic {
        write_matrix_csv(&y, "y_", create(dir, "data.csv")?)?;
    }
    write_chains(dir, &model, &chains, &hmc)?;
    write_text(dir, "hypothesis.toml", &result.to_toml()?)?;
    let mut out = csv::Writer::from_writer(create(dir, "theta_draws.csv")?);
    let p = set.dim();
    let mut header = vec!["chain".to_string()];
    header.extend((1..=p).map(|j| format!("theta_{j}")));
    header.extend(["distance".to_string(), "in_set".to_string()]);
    out.write_record(&header)?;
    for c in &chains {
        for (b, th) in c.beta_draws.iter().zip(&c.theta_draws) {
            let d = set.distance(b);
            let mut row = vec![c.chain_index.to_string()];
            row.extend(th.iter().map(|x| format!("{x:.16e}")));
            row.push(format!("{d:.16e}"));
            row.push(u8::from(d < lambda).to_string());
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(result)
}

/// Output of [`run_flow`].
#[derive(Clone, Debug)]
pub struct FlowRun {
    pub data: FlowData,
    pub chains: Vec<Chain>,
    pub factor_counts: FactorCountPosterior,
    /// Present factors of the highest-posterior draw among those with the
    /// modal count, as `(factor index, network)`.
    pub mode_factors: Vec<(usize, FlowNetwork)>,
    /// `d x T` posterior mean loadings.
    pub loadings_mean: DMatrix<f64>,
    /// Loadings of the posterior-mode draw.
    pub loadings_mode: DMatrix<f64>,
}

/// Writes a factor as `i,j,flow` rows (1-based): every non-zero edge with
/// `i > j`, and every non-zero diagonal (net in/out-flow) entry.
pub fn write_edge_list<W: Write>(net: &FlowNetwork, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["i", "j", "flow"])?;
    let m = net.to_matrix();
    for i in 0..net.n_nodes {
        for j in 0..=i {
            if m[(i, j)] != 0.0 {
                out.write_record([(i + 1).to_string(), (j + 1).to_string(), format!("{:.16e}", m[(i, j)])])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads an edge list from [`write_edge_list`] for a network on `n_nodes`
/// nodes. Rows with `i < j` are rejected.
pub fn read_edge_list<R: Read>(r: R, n_nodes: usize) -> Result<FlowNetwork> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut m = DMatrix::zeros(n_nodes, n_nodes);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Parse(format!("edge list row {}: {what}", line + 1));
        if rec.len() != 3 {
            return Err(bad("expected i,j,flow"));
        }
        let i: usize = rec[0].parse().map_err(|_| bad("node i is not a positive integer"))?;
        let j: usize = rec[1].parse().map_err(|_| bad("node j is not a positive integer"))?;
        let f: f64 = rec[2].parse().map_err(|_| bad("flow is not a number"))?;
        if i == 0 || j == 0 || i > n_nodes || j > n_nodes {
            return Err(bad("node index out of range"));
        }
        if i < j {
            return Err(bad("edges must be listed with i >= j"));
        }
        m[(i - 1, j - 1)] = f;
        if i != j {
            m[(j - 1, i - 1)] = -f;
        }
    }
    FlowNetwork::from_matrix(&m)
}

/// Fits the flow factor model to a `t,i,j,flow` table (or synthetic data)
/// and writes the chains, the factor-count histogram, the posterior-mode
/// factors as edge lists and the loading trajectories.
pub fn run_flow(cfg: &RunConfig) -> Result<FlowRun> {
    let f = &cfg.flow;
    let data = match &f.data {
        Some(p) => read_flow_csv(BufReader::new(File::open(p)?))?,
        None => {
            let mut rng = rng::stream(cfg.seed, rng::STREAM_DATA);
            synthetic_flow_data(&f.synthetic, &mut rng)?.data
        }
    };
    let model = make_flow_factor_model(&data, &f.model)?;
    let layout = *model.flow_layout().expect("flow model has a layout");
    let hmc = sampler_config(cfg, &f.sampler);
    info!(
        "flow factor model: {} nodes, T = {}, d = {}, dimension {}",
        layout.n_nodes,
        layout.t,
        layout.d,
        model.dim()
    );
    let chains = run_chains(&model, &hmc, &LambdaPolicy::Fixed, cfg.chains)?;
    let pooled = Chain::pooled(&chains);
    let factor_counts = factor_count_posterior(&pooled, &layout)?;

    // highest log posterior among draws with the modal count
    let best = (0..pooled.len())
        .filter(|&k| factor_counts.counts[k] == factor_counts.mode)
        .max_by(|&a, &b| pooled.log_posterior[a].total_cmp(&pooled.log_posterior[b]))
        .expect("the modal count occurs in some draw");
    let (beta, theta) = (&pooled.beta_draws[best], &pooled.theta_draws[best]);
    let active = layout.active_factors(theta);
    let mut mode_factors = Vec::new();
    for (l, on) in active.iter().enumerate() {
        if !on {
            continue;
        }
        let block = model.block(&format!("F{}", l + 1)).expect("factor blocks are named F1..Fd");
        let op = block.op.as_ref().expect("factor blocks carry the flow prox");
        debug_assert!(matches!(op.kind(), ProxKind::Flow { .. }));
        mode_factors.push((l, op.evaluate_flow(&beta.rows(block.offset, block.len).into_owned())?));
    }
    let n = pooled.len() as f64;
    let mut loadings_mean = DMatrix::zeros(layout.d, layout.t);
    for th in &pooled.theta_draws {
        loadings_mean += layout.loadings(th);
    }
    loadings_mean /= n;
    let loadings_mode = layout.loadings(theta);

    let dir = prepare_out(cfg)?;
    if f.data.is_none() {
        write_flow_csv(&data, create(dir, "data.csv")?, true)?;
    }
    write_chains(dir, &model, &chains, &hmc)?;
    factor_counts.write_csv(create(dir, "factor_counts.csv")?)?;
    for (l, net) in &mode_factors {
        if net.skew_residual() != 0.0 {
            warn!("factor {} is not exactly skew-symmetric", l + 1);
        }
        write_edge_list(net, create(dir, &format!("factor_{}.csv", l + 1))?)?;
    }
    let mut out = csv::Writer::from_writer(create(dir, "loadings.csv")?);
    out.write_record(["factor", "t", "mean", "mode_draw"])?;
    for l in 0..layout.d {
        for t in 0..layout.t {
            out.write_record([
                (l + 1).to_string(),
                (t + 1).to_string(),
                format!("{:.16e}", loadings_mean[(l, t)]),
                format!("{:.16e}", loadings_mode[(l, t)]),
            ])?;
        }
    }
    out.flush()?;
    Ok(FlowRun {
        data,
        chains,
        factor_counts,
        mode_factors,
        loadings_mean,
        loadings_mode,
    })
}

fn chain_paths(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    if !cfg.summarize.chains.is_empty() {
        return Ok(cfg.summarize.chains.clone());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&cfg.out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("chain_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no chain_*.csv files in {}", cfg.out.display())));
    }
    Ok(paths)
}

/// Summary table, convergence diagnostics and the covariance-contraction
/// check for stored chains.
pub fn run_summarize(cfg: &RunConfig) -> Result<Summary> {
    let s = &cfg.summarize;
    let chains = chain_paths(cfg)?
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let (b, t) = read_chain_csv(BufReader::new(File::open(p)?))?;
            let mut c = Chain::from_draws(b, t);
            c.chain_index = k;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = Chain::pooled(&chains);
    let summary = summarize(&pooled, s.credible_level)?;
    fs::create_dir_all(&cfg.out)?;
    let dir = cfg.out.as_path();
    summary.write_csv(create(dir, "summary.csv")?)?;
    match diagnostics(&chains) {
        Ok(d) => write_text(dir, "diagnostics.toml", &toml::to_string(&d)?)?,
        Err(e) => warn!("skipping diagnostics: {e}"),
    }
    if pooled.theta_draws.first().map(|t| t.len()) == pooled.beta_draws.first().map(|b| b.len()) {
        let c = covariance_contraction(&pooled, s.bootstrap, cfg.seed)?;
        write_text(dir, "contraction.toml", &toml::to_string(&c)?)?;
    }
    Ok(summary)
}
