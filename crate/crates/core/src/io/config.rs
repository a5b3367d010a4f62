//! Run configuration: one TOML file with a table per subcommand.
//!
//! ```toml
//! schema = "proxprior-config/1"
//! seed = 42
//! chains = 1
//!
//! [test]
//! normal = [1.0, 1.0, 1.0]
//! offset = 1.0
//! lambda = 2.0
//!
//! [test.sampler]
//! n_samples = 5000
//! n_burnin = 2000
//! ```
//!
//! Every key has a default, so an empty file (plus the schema line) is a
//! valid configuration. The master `seed` replaces any `seed` given inside a
//! sampler table.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::admm::{first_difference_matrix, AdmmConfig};
use crate::error::{Error, Result};
use crate::models::{FlowFactorOptions, SyntheticFlowSpec};
use crate::prox::{AffineConstraint, ConvexSetSpec, ProxOperator};
use crate::sampler::{Algorithm, HmcConfig};

/// Version tag every configuration file must carry.
pub const SCHEMA: &str = "proxprior-config/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    pub chains: usize,
    /// Output directory.
    pub out: PathBuf,
    pub calibrate: CalibrateConfig,
    pub sample: SampleConfig,
    pub test: TestConfig,
    pub flow: FlowConfig,
    pub summarize: SummarizeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA.to_string(),
            seed: 0,
            chains: 1,
            out: PathBuf::from("proxprior-out"),
            calibrate: CalibrateConfig::default(),
            sample: SampleConfig::default(),
            test: TestConfig::default(),
            flow: FlowConfig::default(),
            summarize: SummarizeConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        if cfg.schema != SCHEMA {
            return Err(Error::Config(format!(
                "unsupported schema {:?}, expected {SCHEMA:?}",
                cfg.schema
            )));
        }
        if cfg.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&fs::read_to_string(path)?)?;
        // data paths are relative to the config file
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(p) = self.test.data.as_mut() {
            fix(p);
        }
        if let Some(p) = self.flow.data.as_mut() {
            fix(p);
        }
        if let Some(p) = self.sample.model.data_mut() {
            fix(p);
        }
        self.summarize.chains.iter_mut().for_each(fix);
    }
}

/// A family of operators indexed by their scale λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorFamily {
    SoftThreshold { dim: usize },
    /// Prox of `½‖θ‖²`, `β/(1+λ)`.
    Ridge { dim: usize },
    GroupRow { rows: usize, cols: usize },
    Nuclear { rows: usize, cols: usize },
    SetExpansion { set: ConvexSetSpec },
    /// Total variation on a chain of `dim` coordinates.
    FusedL1 { dim: usize },
    /// Flow prox with `λ₂ = ratio · λ₁`.
    Flow { n_nodes: usize, ratio: f64 },
    /// Projection onto `{θ : normalᵀθ = offset}`; does not depend on λ.
    Affine { normal: Vec<f64>, offset: f64 },
}

impl OperatorFamily {
    pub fn dim(&self) -> Result<usize> {
        Ok(match self {
            Self::SoftThreshold { dim } | Self::Ridge { dim } | Self::FusedL1 { dim } => *dim,
            Self::GroupRow { rows, cols } | Self::Nuclear { rows, cols } => rows * cols,
            Self::SetExpansion { set } => set.build()?.dim(),
            Self::Flow { n_nodes, .. } => crate::admm::n_edges(*n_nodes),
            Self::Affine { normal, .. } => normal.len(),
        })
    }

    pub fn operator(&self, lambda: f64) -> Result<ProxOperator> {
        match self {
            Self::SoftThreshold { .. } => ProxOperator::soft_threshold(lambda),
            Self::Ridge { .. } => ProxOperator::ridge(lambda),
            Self::GroupRow { rows, cols } => ProxOperator::group_row(*rows, *cols, lambda),
            Self::Nuclear { rows, cols } => ProxOperator::nuclear(*rows, *cols, lambda),
            Self::SetExpansion { set } => ProxOperator::set_expansion(set.build()?, lambda),
            Self::FusedL1 { dim } => ProxOperator::fused_l1(first_difference_matrix(*dim), lambda, AdmmConfig::default()),
            Self::Flow { n_nodes, ratio } => ProxOperator::flow(*n_nodes, lambda, ratio * lambda, AdmmConfig::default()),
            Self::Affine { normal, offset } => Ok(ProxOperator::affine(AffineConstraint::hyperplane(normal, *offset)?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub family: OperatorFamily,
    /// `β ~ N(0, prior_sd² I)`.
    pub prior_sd: f64,
    pub n_mc: usize,
    /// Explicit λ grid; otherwise the default log grid.
    pub grid: Option<Vec<f64>>,
    /// `ω ~ Beta(omega_a, omega_b)` for the induced λ density.
    pub omega_a: f64,
    pub omega_b: f64,
    pub density_draws: usize,
    pub density_bins: usize,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            family: OperatorFamily::SoftThreshold { dim: 1 },
            prior_sd: 1.0,
            n_mc: 10_000,
            grid: None,
            omega_a: 1.0,
            omega_b: 1.0,
            density_draws: 100_000,
            density_bins: 100,
        }
    }
}

/// Models for `sample`. Without a `data` file, `n` observations are
/// simulated around the given truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleModel {
    /// Set-expansion prior around a convex set; data CSV has one column per
    /// coordinate.
    GaussianMean {
        data: Option<PathBuf>,
        theta0: Vec<f64>,
        n: usize,
        sigma: f64,
        set: ConvexSetSpec,
        lambda: f64,
    },
    /// Soft-threshold prior; data CSV columns are `y, x_1, …, x_p`.
    SparseRegression {
        data: Option<PathBuf>,
        coefficients: Vec<f64>,
        n: usize,
        sigma: f64,
        lambda: f64,
    },
    /// Mean restricted to a hyperplane by projection.
    AffineMean {
        data: Option<PathBuf>,
        theta0: Vec<f64>,
        n: usize,
        sigma: f64,
        normal: Vec<f64>,
        offset: f64,
    },
}

impl SampleModel {
    fn data_mut(&mut self) -> Option<&mut PathBuf> {
        match self {
            Self::GaussianMean { data, .. } | Self::SparseRegression { data, .. } | Self::AffineMean { data, .. } => {
                data.as_mut()
            }
        }
    }
}

impl Default for SampleModel {
    fn default() -> Self {
        SampleModel::SparseRegression {
            data: None,
            coefficients: vec![2.0, -1.5, 0.0, 0.0, 0.0],
            n: 50,
            sigma: 1.0,
            lambda: 1.0,
        }
    }
}

/// Hyper-prior on λ through a uniform (or Beta) deformation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperPrior {
    pub omega_a: f64,
    pub omega_b: f64,
    pub n_mc: usize,
    /// Redraw λ every iteration instead of once per chain.
    pub per_iteration: bool,
}

impl Default for HyperPrior {
    fn default() -> Self {
        Self {
            omega_a: 1.0,
            omega_b: 1.0,
            n_mc: 10_000,
            per_iteration: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub model: SampleModel,
    pub sampler: HmcConfig,
    pub hyper: Option<HyperPrior>,
    pub credible_level: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            model: SampleModel::default(),
            sampler: HmcConfig::default(),
            hyper: None,
            credible_level: 0.95,
        }
    }
}

/// Set-expansion hypothesis test of `θ ∈ {normalᵀθ = offset}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub normal: Vec<f64>,
    pub offset: f64,
    /// Observations, one column per coordinate. Simulated from `theta0`
    /// when absent.
    pub data: Option<PathBuf>,
    pub theta0: Vec<f64>,
    pub n: usize,
    pub sigma: f64,
    /// Expansion radius. Required unless `balanced_lambda` is set.
    pub lambda: Option<f64>,
    /// Use the prior median distance to the set as λ.
    pub balanced_lambda: bool,
    pub balanced_mc: usize,
    /// Fresh prior draws for the prior odds.
    pub prior_mc: usize,
    pub sampler: HmcConfig,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            normal: vec![1.0, 1.0, 1.0],
            offset: 1.0,
            data: None,
            theta0: vec![-0.5, 0.3, 1.2],
            n: 20,
            sigma: 3.0,
            lambda: Some(2.0),
            balanced_lambda: false,
            balanced_mc: 100_000,
            prior_mc: crate::inference::DEFAULT_PRIOR_MC,
            sampler: HmcConfig {
                n_samples: 5000,
                n_burnin: 2000,
                ..HmcConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// `t,i,j,flow` table; synthetic data from `synthetic` when absent.
    pub data: Option<PathBuf>,
    pub synthetic: SyntheticFlowSpec,
    pub model: FlowFactorOptions,
    pub sampler: HmcConfig,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            data: None,
            synthetic: SyntheticFlowSpec::default(),
            model: FlowFactorOptions::default(),
            sampler: HmcConfig {
                algorithm: Algorithm::Hmc,
                n_leapfrog: 20,
                n_samples: 20_000,
                n_burnin: 5000,
                thin: 10,
                adapt_mass: true,
                ..HmcConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeConfig {
    /// Chain tables; all `chain_*.csv` in the output directory when empty.
    pub chains: Vec<PathBuf>,
    pub credible_level: f64,
    pub bootstrap: usize,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        Self {
            chains: Vec::new(),
            credible_level: 0.95,
            bootstrap: 200,
        }
    }
}

/// Reads a headed CSV of numbers into a matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{}: row {}: bad number {s:?}: {e}", path.display(), line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Shape(format!("{}: ragged rows", path.display())));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 {
        return Err(Error::InvalidInput(format!("{}: no data rows", path.display())));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}
