//! Feasible-flow networks and the flow prox.
//!
//! A flow matrix `F` is skew-symmetric off the diagonal, so the strictly
//! lower-triangular entries `z_{i,j}` (`i > j`) determine it. Edges are
//! ordered row-major over `(i, j)`, `i > j`:
//! `(1,0), (2,0), (2,1), (3,0), …` (0-based). The diagonal carries external
//! in/out-flows.

use nalgebra::{DMatrix, DVector};

use super::{solve_analysis_l1, AdmmConfig, AdmmOutcome};
use crate::error::{Error, Result};

pub fn n_edges(n_nodes: usize) -> usize {
    n_nodes * n_nodes.saturating_sub(1) / 2
}

/// Column of edge `(i, j)`, `i > j`, in the lower-triangular vector.
pub fn edge_index(i: usize, j: usize) -> usize {
    debug_assert!(i > j);
    i * (i - 1) / 2 + j
}

/// Inverse of [`n_edges`]; errors unless `len` is a triangular number with
/// at least two nodes.
pub fn nodes_from_edges(len: usize) -> Result<usize> {
    let n = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    if n >= 2 && n_edges(n) == len {
        Ok(n)
    } else {
        Err(Error::Shape(format!(
            "{len} is not n(n-1)/2 for any node count n >= 2"
        )))
    }
}

/// Node-by-edge matrix with `(Cz)_k = Σ_{i>k} z_{i,k} − Σ_{i<k} z_{k,i}`.
pub fn build_flow_constraint_matrix(n_nodes: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n_nodes, n_edges(n_nodes));
    for i in 1..n_nodes {
        for j in 0..i {
            let e = edge_index(i, j);
            c[(j, e)] = 1.0;
            c[(i, e)] = -1.0;
        }
    }
    c
}

/// Lower-triangular representation of a flow matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowNetwork {
    pub n_nodes: usize,
    /// `z_{i,j}` for `i > j`, row-major.
    pub lower: DVector<f64>,
    /// External flows `F_{j,j}`.
    pub diag: DVector<f64>,
}

impl FlowNetwork {
    /// Network whose diagonal is the net column flow `Cz`.
    pub fn from_lower(lower: DVector<f64>) -> Result<Self> {
        let n = nodes_from_edges(lower.len())?;
        let diag = build_flow_constraint_matrix(n) * &lower;
        Ok(Self {
            n_nodes: n,
            lower,
            diag,
        })
    }

    /// Reads the lower triangle and diagonal of a square matrix; the strict
    /// upper triangle is ignored.
    pub fn from_matrix(f: &DMatrix<f64>) -> Result<Self> {
        let n = f.nrows();
        if f.ncols() != n || n < 2 {
            return Err(Error::Shape(format!(
                "flow matrix must be square with at least 2 nodes, got {}x{}",
                f.nrows(),
                f.ncols()
            )));
        }
        let mut lower = DVector::zeros(n_edges(n));
        for i in 1..n {
            for j in 0..i {
                lower[edge_index(i, j)] = f[(i, j)];
            }
        }
        Ok(Self {
            n_nodes: n,
            lower,
            diag: f.diagonal(),
        })
    }

    /// Full `n x n` matrix, `F_{j,i} = −F_{i,j}` off the diagonal.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes;
        let mut f = DMatrix::zeros(n, n);
        for i in 1..n {
            for j in 0..i {
                let z = self.lower[edge_index(i, j)];
                f[(i, j)] = z;
                f[(j, i)] = -z;
            }
        }
        for j in 0..n {
            f[(j, j)] = self.diag[j];
        }
        f
    }

    /// `Cz`, the net off-diagonal flow into each node.
    pub fn net_flow(&self) -> DVector<f64> {
        build_flow_constraint_matrix(self.n_nodes) * &self.lower
    }

    /// Largest `|(Cz)_j − F_{j,j}|`: how far the diagonal is from the net
    /// flow it is meant to account for.
    pub fn conservation_residual(&self) -> f64 {
        (self.net_flow() - &self.diag).amax()
    }

    /// Largest `|(Cz)_j|` over nodes without external flow.
    pub fn internal_imbalance(&self) -> f64 {
        let net = self.net_flow();
        (0..self.n_nodes)
            .filter(|&j| self.diag[j] == 0.0)
            .map(|j| net[j].abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|F_{i,j} + F_{j,i}|` off the diagonal of the full matrix.
    pub fn skew_residual(&self) -> f64 {
        let f = self.to_matrix();
        let mut worst: f64 = 0.0;
        for i in 0..self.n_nodes {
            for j in 0..i {
                worst = worst.max((f[(i, j)] + f[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.lower.amax() <= tol && self.diag.amax() <= tol
    }
}

/// Prox of `λ₁‖z‖₁ + λ₂‖Cz‖₁`.
pub fn prox_flow(
    beta_lower: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
    cfg: &AdmmConfig,
) -> Result<FlowNetwork> {
    Ok(prox_flow_detailed(beta_lower, lambda1, lambda2, cfg)?.0)
}

/// [`prox_flow`] plus the solver report (iterations, residuals, Jacobian).
pub fn prox_flow_detailed(
    beta_lower: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
    cfg: &AdmmConfig,
) -> Result<(FlowNetwork, AdmmOutcome)> {
    let n = nodes_from_edges(beta_lower.len())?;
    for (name, l) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::InvalidInput(format!("{name} must be nonnegative, got {l}")));
        }
    }
    let m = beta_lower.len();
    let c = build_flow_constraint_matrix(n);
    if lambda2 == 0.0 {
        // only the edge penalty: K = I, still through the solver for a uniform report
        let k = DMatrix::identity(m, m);
        let w = DVector::from_element(m, lambda1);
        let out = solve_analysis_l1(&k, &w, beta_lower, cfg, false)?;
        let diag = &c * &out.z;
        return Ok((
            FlowNetwork {
                n_nodes: n,
                lower: out.z.clone(),
                diag,
            },
            out,
        ));
    }
    let (k, w) = stacked_operator(&c, lambda1, lambda2);
    let out = solve_analysis_l1(&k, &w, beta_lower, cfg, false)?;
    let net = out.kz.rows(m, n).into_owned();
    Ok((
        FlowNetwork {
            n_nodes: n,
            lower: out.z.clone(),
            diag: net,
        },
        out,
    ))
}

/// `K = [I; C]` with weights `[λ₁; λ₂]`; rows with zero weight are dropped.
fn stacked_operator(c: &DMatrix<f64>, lambda1: f64, lambda2: f64) -> (DMatrix<f64>, DVector<f64>) {
    let (n, m) = c.shape();
    if lambda1 == 0.0 {
        // keep the edge rows out; the diagonal still comes from the node rows
        let mut k = DMatrix::zeros(m + n, m);
        k.view_mut((m, 0), (n, m)).copy_from(c);
        let mut w = DVector::zeros(m + n);
        w.rows_mut(m, n).fill(lambda2);
        return (k, w);
    }
    let mut k = DMatrix::zeros(m + n, m);
    k.view_mut((0, 0), (m, m)).fill_with_identity();
    k.view_mut((m, 0), (n, m)).copy_from(c);
    let mut w = DVector::zeros(m + n);
    w.rows_mut(0, m).fill(lambda1);
    w.rows_mut(m, n).fill(lambda2);
    (k, w)
}

/// Test hook: run the flow ADMM refactoring the linear system every iteration.
#[doc(hidden)]
pub fn prox_flow_refactoring(
    beta_lower: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
    cfg: &AdmmConfig,
) -> Result<DVector<f64>> {
    let n = nodes_from_edges(beta_lower.len())?;
    let c = build_flow_constraint_matrix(n);
    let (k, w) = stacked_operator(&c, lambda1, lambda2);
    Ok(solve_analysis_l1(&k, &w, beta_lower, cfg, true)?.z)
}
