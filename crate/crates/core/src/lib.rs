//! Numerical laboratory for the small-noise cut-off phenomenon of linear
//! processes `X^ε_t(x) = e^{-Λt} x + ε S_t`.
//!
//! The crate is split along the pipeline of a cut-off experiment:
//!
//! * [`spectral`]: stability of the drift, dominant (Jordan) asymptotics of
//!   `e^{-Λt}x`, ω-limit sets and cut-off time scales.
//! * [`metrics`]: total variation and Wasserstein distances, exact and
//!   empirical, and the limiting cut-off profiles.
//! * [`simulate`]: exact-in-law drivers, stochastic convolutions and
//!   closed-form marginals.
//! * [`scenarios`]: the catalog of process families as validated values.
//! * [`engine`]: distance curves along `t_cut + r·w`, profile vs. window
//!   classification and convergence reports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod export;
pub mod linalg;
pub mod metrics;
pub mod quad;
pub mod scenarios;
pub mod simulate;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
