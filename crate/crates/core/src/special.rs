//! Special functions used by the Gaussian distance formulas.
//!
//! `erf`/`erfc`/`gamma` come from `libm` (a port of musl, within a few ulps).
//! The normal quantile starts from `statrs`' inverse erfc and is polished
//! with one Newton step.

use std::f64::consts::{PI, SQRT_2};

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile, `p` in (0,1).
pub fn norm_quantile(p: f64) -> f64 {
    let x = -SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    // the upper tail is evaluated directly to avoid cancellation
    let resid = if x > 0.0 { (1.0 - p) - norm_cdf(-x) } else { norm_cdf(x) - p };
    let step = resid / norm_pdf(x);
    if step.is_finite() {
        x - step
    } else {
        x
    }
}

/// `2Φ(d/2) - 1`, the total variation distance between `N(d·e, I)` and
/// `N(0, I)` for a unit vector `e`. Written with `erf` so that small `d`
/// keeps full relative precision.
pub fn tv_of_mahalanobis(d: f64) -> f64 {
    erf(d.abs() / (2.0 * SQRT_2))
}
