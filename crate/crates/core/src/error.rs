use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("infeasible affine constraint: b is not in Col(Aᵀ) (residual {residual:.3e})")]
    InfeasibleConstraint { residual: f64 },

    #[error(
        "ADMM did not converge after {iterations} iterations \
         (primal residual {primal:.3e}, dual residual {dual:.3e})"
    )]
    Convergence {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("SVD failed to converge within {max_iterations} sweeps ({rows}x{cols} input)")]
    Numerical {
        max_iterations: usize,
        rows: usize,
        cols: usize,
    },

    #[error("degenerate operator: {0}")]
    DegenerateOperator(String),

    #[error("chain failure: {divergent} of {total} iterations diverged")]
    ChainFailure { divergent: usize, total: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
