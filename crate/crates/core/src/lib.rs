//! Proximal-mapping priors for Bayesian inference on sets of varying
//! dimension.
//!
//! A prior on `θ` is induced by drawing `β` from a smooth distribution and
//! mapping it through a proximal operator, `θ = prox_{λg}(β)`. The posterior
//! is sampled in `β`-space with Hamiltonian Monte Carlo and pushed forward.

// `!(x > 0.0)` is deliberate: NaN has to fail these checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod calibration;
pub mod error;
pub mod gradient;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod models;
pub mod prox;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
