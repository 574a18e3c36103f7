//! Total variation and Wasserstein distances between the laws that occur in
//! cut-off experiments, and the limiting cut-off profiles.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::linalg::{norm2, sqrtm_psd, symmetrize};
use crate::quad::{integrate, integrate_pieces};
use crate::simulate::path_rng;
use crate::special::{erf, gamma, norm_cdf, norm_quantile, tv_of_mahalanobis};
use crate::{Error, Result};

const SYM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianLaw {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if covariance.nrows() != m || covariance.ncols() != m {
            return Err(Error::InvalidArgument(format!(
                "mean has length {m} but covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let scale = covariance.amax().max(1.0);
        if (&covariance - covariance.transpose()).amax() > SYM_TOL * scale {
            return Err(Error::InvalidMatrix("covariance is not symmetric".into()));
        }
        let min_eig = symmetrize(&covariance).symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL * scale {
            return Err(Error::InvalidMatrix(format!("covariance has negative eigenvalue {min_eig:.3e}")));
        }
        Ok(GaussianLaw { mean, covariance })
    }

    pub fn scalar(mean: f64, variance: f64) -> Self {
        GaussianLaw { mean: DVector::from_element(1, mean), covariance: DMatrix::from_element(1, 1, variance) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Law of `a + cX` for `X` with this law.
    pub fn affine(&self, shift: &DVector<f64>, c: f64) -> Self {
        GaussianLaw { mean: shift + &self.mean * c, covariance: &self.covariance * (c * c) }
    }
}

/// Symmetric α-stable law on the line: `E e^{izX} = exp(iz·location - scale_c|z|^α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableLaw {
    pub alpha: f64,
    pub scale_c: f64,
    pub location: f64,
}

impl StableLaw {
    pub fn new(alpha: f64, scale_c: f64, location: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(Error::InadmissibleRange { name: "alpha".into(), reason: format!("{alpha} not in (1,2)") });
        }
        if !(scale_c > 0.0) {
            return Err(Error::InadmissibleRange {
                name: "scale_c".into(),
                reason: format!("{scale_c} must be positive"),
            });
        }
        Ok(StableLaw { alpha, scale_c, location })
    }

    pub fn cf(&self, z: f64) -> Complex64 {
        Complex64::from_polar((-self.scale_c * z.abs().powf(self.alpha)).exp(), z * self.location)
    }

    /// Multiplier of a unit stable variable: `X = location + dispersion·L`.
    pub fn dispersion(&self) -> f64 {
        self.scale_c.powf(1.0 / self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawDescriptor {
    Gaussian(GaussianLaw),
    Stable(StableLaw),
    Empirical { samples: Vec<Vec<f64>> },
}

impl LawDescriptor {
    pub fn dim(&self) -> usize {
        match self {
            LawDescriptor::Gaussian(g) => g.dim(),
            LawDescriptor::Stable(_) => 1,
            LawDescriptor::Empirical { samples } => samples.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LawDescriptor::Empirical { samples } = self {
            if samples.len() < 2 {
                return Err(Error::InvalidArgument("empirical law needs at least two samples".into()));
            }
        }
        Ok(())
    }
}

fn mahalanobis(cov: &DMatrix<f64>, delta: &DVector<f64>) -> Option<f64> {
    let chol = cov.clone().cholesky()?;
    let y = chol.l().solve_lower_triangular(delta)?;
    Some(y.norm())
}

/// Total variation between two univariate Gaussians, exact.
///
/// With unequal variances the densities cross at the two roots of a
/// quadratic, and the distance is the probability gap on the interval
/// between them.
fn tv_gaussian_1d(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let delta = (m1 - m2).abs();
    if v1 == 0.0 || v2 == 0.0 {
        return if v1 == v2 && delta == 0.0 { 0.0 } else { 1.0 };
    }
    if v1 == v2 {
        return tv_of_mahalanobis(delta / v1.sqrt());
    }
    // Order so that v1 < v2: then f1 > f2 exactly between the roots.
    let (m1, v1, m2, v2) = if v1 < v2 { (m1, v1, m2, v2) } else { (m2, v2, m1, v1) };
    let a = 0.5 / v2 - 0.5 / v1;
    let b = m1 / v1 - m2 / v2;
    let c = m2 * m2 / (2.0 * v2) - m1 * m1 / (2.0 * v1) - 0.5 * (v1 / v2).ln();
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let q = -0.5 * (b + b.signum() * disc);
    let (r1, r2) = if q == 0.0 {
        let r = (-c / a).max(0.0).sqrt();
        (-r, r)
    } else {
        let (p, s) = (q / a, c / q);
        (p.min(s), p.max(s))
    };
    let mass = |lo: f64, hi: f64, m: f64, v: f64| {
        let s = v.sqrt();
        let (zl, zh) = ((lo - m) / s, (hi - m) / s);
        // upper-tail differences lose less precision when both are positive
        if zl > 0.0 {
            norm_cdf(-zl) - norm_cdf(-zh)
        } else {
            norm_cdf(zh) - norm_cdf(zl)
        }
    };
    (mass(r1, r2, m1, v1) - mass(r1, r2, m2, v2)).clamp(0.0, 1.0)
}

/// Exact total variation between Gaussians: any pair on the line, or a
/// pair sharing one covariance in higher dimension.
pub fn tv_gaussian(g1: &GaussianLaw, g2: &GaussianLaw) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::InvalidArgument(format!("dimensions differ: {} vs {}", g1.dim(), g2.dim())));
    }
    if g1.dim() == 1 {
        return Ok(tv_gaussian_1d(g1.mean[0], g1.covariance[(0, 0)], g2.mean[0], g2.covariance[(0, 0)]));
    }
    let scale = g1.covariance.amax().max(g2.covariance.amax()).max(1e-300);
    if (&g1.covariance - &g2.covariance).amax() > SYM_TOL * scale {
        return Err(Error::UnsupportedCase("multivariate Gaussians with unequal covariances".into()));
    }
    let delta = &g1.mean - &g2.mean;
    if delta.amax() == 0.0 {
        return Ok(0.0);
    }
    match mahalanobis(&symmetrize(&g1.covariance), &delta) {
        Some(d) => Ok(tv_of_mahalanobis(d)),
        None => Err(Error::UnsupportedCase("singular common covariance".into())),
    }
}

/// Total variation between `N(m1, C1)` and `Z = N(m2, C2)` in any dimension,
/// as `(value, bound)`.
///
/// The value is the exact distance when the pair is supported by
/// [`tv_gaussian`]; otherwise it is the distance between `N(m1, C2)` and
/// `Z`, and `bound` caps the error through
/// `TV(N(0,C1), N(0,C2)) ≤ (3/2)‖C2^{-1/2} C1 C2^{-1/2} - I‖_F`.
pub fn tv_gaussian_with_bound(g: &GaussianLaw, z: &GaussianLaw) -> Result<(f64, f64)> {
    match tv_gaussian(g, z) {
        Ok(v) => Ok((v, 0.0)),
        Err(Error::UnsupportedCase(_)) if g.dim() > 1 => {
            let shifted = GaussianLaw { mean: g.mean.clone(), covariance: z.covariance.clone() };
            let value = tv_gaussian(&shifted, z)?;
            let root = sqrtm_psd(&z.covariance);
            let inv = root.try_inverse().ok_or(Error::SingularLimitLaw)?;
            let rel = &inv * &g.covariance * &inv - DMatrix::identity(g.dim(), g.dim());
            Ok((value, (1.5 * rel.norm()).min(1.0)))
        }
        Err(e) => Err(e),
    }
}

/// Result of a grid-based total variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityTv {
    pub value: f64,
    /// Mass missing from the grid, `max(|1 - ∫f1|, |1 - ∫f2|)`.
    pub tail_mass: f64,
}

fn trapezoid(grid: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    grid.windows(2).enumerate().map(|(i, w)| 0.5 * (w[1] - w[0]) * (f(i) + f(i + 1))).sum()
}

/// `(1/2)∫|f1 - f2|` by the trapezoidal rule on a shared grid.
pub fn tv_from_densities(grid: &[f64], f1: &[f64], f2: &[f64]) -> Result<DensityTv> {
    if grid.len() != f1.len() || grid.len() != f2.len() || grid.len() < 2 {
        return Err(Error::GridMismatch(format!("grid {}, densities {} and {}", grid.len(), f1.len(), f2.len())));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::GridMismatch("grid must be strictly increasing".into()));
    }
    if f1.iter().chain(f2).any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("densities must be finite and non-negative".into()));
    }
    let n1 = trapezoid(grid, |i| f1[i]);
    let n2 = trapezoid(grid, |i| f2[i]);
    let tail_mass = (1.0 - n1).abs().max((1.0 - n2).abs());
    if tail_mass > 1e-6 {
        return Err(Error::NotNormalized(if (1.0 - n1).abs() > (1.0 - n2).abs() { n1 } else { n2 }));
    }
    let value = 0.5 * trapezoid(grid, |i| (f1[i] - f2[i]).abs());
    Ok(DensityTv { value: value.min(1.0), tail_mass })
}

/// Density recovered from a characteristic function on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// `|1 - h·Σf|` before clipping.
    pub correction: f64,
    /// Mass removed by clipping negative values.
    pub clipped: f64,
}

/// Symmetric uniform grid of `n` points with spacing `h`, centred at 0.
pub fn symmetric_grid(n: usize, h: f64) -> Vec<f64> {
    let x0 = -0.5 * (n as f64 - 1.0) * h;
    (0..n).map(|k| x0 + k as f64 * h).collect()
}

/// Inverts the characteristic function of `law` on a symmetric uniform grid
/// by one FFT: with `x_k = x_0 + kh` and `z_j = z_0 + j·dz`, `dz = 2π/(nh)`,
/// `f(x_k) ≈ (dz/2π) Σ_j ψ(z_j) e^{-i z_j x_k}`.
pub fn density_from_cf(law: &StableLaw, grid: &[f64]) -> Result<CfDensity> {
    let n = grid.len();
    if n < 8 {
        return Err(Error::GridMismatch("CF inversion needs at least 8 grid points".into()));
    }
    let h = grid[1] - grid[0];
    let x0 = grid[0];
    let uniform = grid.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
    if !(h > 0.0) || !uniform || (grid[0] + grid[n - 1]).abs() > 1e-9 * h * n as f64 {
        return Err(Error::GridMismatch("grid must be uniform and symmetric about 0".into()));
    }
    let dz = 2.0 * PI / (n as f64 * h);
    let z0 = -0.5 * (n as f64 - 1.0) * dz;
    let edge = law.cf(z0).norm();
    if edge > 1e-12 {
        return Err(Error::NyquistViolation(format!(
            "|ψ| = {edge:.3e} at the cutoff frequency {:.4}; refine the grid step",
            -z0
        )));
    }
    let mut buf: Vec<Complex64> = (0..n)
        .map(|j| {
            let z = z0 + j as f64 * dz;
            law.cf(z) * Complex64::from_polar(1.0, -(j as f64) * dz * x0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut density: Vec<f64> = buf
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let phase = Complex64::from_polar(1.0, -z0 * (x0 + k as f64 * h));
            (phase * s).re * dz / (2.0 * PI)
        })
        .collect();
    let raw_mass: f64 = density.iter().sum::<f64>() * h;
    let mut clipped = 0.0;
    for v in density.iter_mut() {
        if *v < 0.0 {
            clipped -= *v * h;
            *v = 0.0;
        }
    }
    if clipped > 1e-4 {
        return Err(Error::NegativeMass(clipped));
    }
    let mass: f64 = density.iter().sum::<f64>() * h;
    density.iter_mut().for_each(|v| *v /= mass);
    Ok(CfDensity { grid: grid.to_vec(), density, correction: (1.0 - raw_mass).abs(), clipped })
}

/// `W_p(shift + Z, Z) = ‖shift‖` for any law with a finite `p`-th moment.
pub fn wp_exact(law: &LawDescriptor, shift: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {p}")));
    }
    if let LawDescriptor::Stable(s) = law {
        if p >= s.alpha {
            return Err(Error::MomentViolation { p, alpha: s.alpha });
        }
    }
    if law.dim() != shift.len() {
        return Err(Error::InvalidArgument(format!("shift has length {}, law has dim {}", shift.len(), law.dim())));
    }
    Ok(shift.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Exact minimum-cost assignment (shortest augmenting paths with
/// potentials, O(n³)). Returns `assign[i] = j`.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    let inf = f64::INFINITY;
    // 1-based arrays; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    assign
}

const MAX_EXACT_ASSIGNMENT: usize = 2048;

/// Empirical `W_p` between equal-size samples: monotone coupling on the
/// line, exact assignment in higher dimension.
pub fn wp_empirical(s1: &[Vec<f64>], s2: &[Vec<f64>], p: f64) -> Result<f64> {
    if s1.len() != s2.len() {
        return Err(Error::UnequalCounts(s1.len(), s2.len()));
    }
    if s1.is_empty() {
        return Err(Error::InvalidArgument("empty samples".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {p}")));
    }
    let dim = s1[0].len();
    if s1.iter().chain(s2).any(|s| s.len() != dim) {
        return Err(Error::InvalidArgument("samples have inconsistent dimension".into()));
    }
    let n = s1.len();
    if dim == 1 {
        let a: Vec<f64> = s1.iter().map(|s| s[0]).collect();
        let b: Vec<f64> = s2.iter().map(|s| s[0]).collect();
        return Ok(wp_sorted_1d(a, b, p));
    }
    if n > MAX_EXACT_ASSIGNMENT {
        return Err(Error::TooLargeForExact(n));
    }
    let cost = DMatrix::from_fn(n, n, |i, j| {
        let d2: f64 = s1[i].iter().zip(&s2[j]).map(|(x, y)| (x - y) * (x - y)).sum();
        d2.sqrt().powf(p)
    });
    let assign = min_cost_assignment(&cost);
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok((total / n as f64).powf(1.0 / p))
}

fn wp_sorted_1d(mut a: Vec<f64>, mut b: Vec<f64>, p: f64) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs().powf(p)).sum();
    (s / n).powf(1.0 / p)
}

/// `W_p` between a univariate sample and an exact law given by its quantile
/// function, coupling the `i`-th order statistic with `Q((i - 1/2)/n)`.
pub fn wp_sample_vs_quantiles(samples: &[f64], quantile: impl Fn(f64) -> f64, p: f64) -> f64 {
    let n = samples.len() as f64;
    let table: Vec<f64> = (0..samples.len()).map(|i| quantile((i as f64 + 0.5) / n)).collect();
    wp_sample_vs_table(samples, &table, p)
}

/// As [`wp_sample_vs_quantiles`] with the quantiles `Q((i - 1/2)/n)`
/// precomputed.
pub fn wp_sample_vs_table(samples: &[f64], table: &[f64], p: f64) -> f64 {
    debug_assert_eq!(samples.len(), table.len());
    let mut a = samples.to_vec();
    a.sort_by(f64::total_cmp);
    let s: f64 = a.iter().zip(table).map(|(x, q)| (x - q).abs().powf(p)).sum();
    (s / a.len() as f64).powf(1.0 / p)
}

/// Bootstrap standard error of a statistic of a univariate sample.
pub fn bootstrap_stderr(samples: &[f64], resamples: usize, seed: u64, stat: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
    let n = samples.len();
    if n < 2 || resamples < 2 {
        return 0.0;
    }
    let values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = path_rng(seed, b as u64);
            let draw: Vec<f64> = (0..n).map(|_| samples[rng.random_range(0..n)]).collect();
            stat(&draw)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / resamples as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (resamples as f64 - 1.0)).sqrt()
}

/// `E|N|^p` for a standard normal `N`.
fn normal_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / PI.sqrt()
}

/// `(E|m + κN|^p)^{1/p}` for a standard normal `N`.
pub fn gaussian_shift_moment(m: f64, kappa: f64, p: f64) -> Result<f64> {
    let (m, kappa) = (m.abs(), kappa.abs());
    if kappa == 0.0 {
        return Ok(m);
    }
    if p == 2.0 {
        return Ok(m.hypot(kappa));
    }
    if m == 0.0 {
        return Ok(kappa * normal_abs_moment(p).powf(1.0 / p));
    }
    if p == 1.0 {
        let s = m / kappa;
        return Ok(kappa * (2.0 / PI).sqrt() * (-0.5 * s * s).exp() + m * (1.0 - 2.0 * norm_cdf(-s)));
    }
    let u = kappa / m;
    if u <= 1e-3 {
        // E(1 + uN)^p by the moments E N^{2k} = (2k-1)!!
        let c = |k: i32| (0..k).fold(1.0, |acc, i| acc * (p - i as f64) / (i as f64 + 1.0));
        let series = 1.0 + c(2) * u.powi(2) + 3.0 * c(4) * u.powi(4) + 15.0 * c(6) * u.powi(6);
        return Ok(m * series.powf(1.0 / p));
    }
    let kink = -m / kappa;
    let lo = kink.min(-40.0) - 10.0;
    let hi = 40.0f64.max(kink + 10.0);
    let mut breaks = vec![lo];
    if kink > lo && kink < hi {
        breaks.push(kink);
    }
    breaks.push(hi);
    let q = integrate_pieces(
        |z| (m + kappa * z).abs().powf(p) * (-0.5 * z * z).exp() / (2.0 * PI).sqrt(),
        &breaks,
        0.0,
        1e-13,
    )?;
    Ok(q.value.powf(1.0 / p))
}

/// `W_p` between Gaussians with an error half-width.
///
/// Exact on the line (the comonotone coupling is optimal) and for `p = 2`
/// (Bures formula). Otherwise returns the midpoint of the sandwich
/// `max(‖Δm‖, W_2·[p ≥ 2]) ≤ W_p ≤ min(‖Δm‖ + δ_p, W_2 if p ≤ 2)` where
/// `δ_p` bounds the centred distance through the coupling `C^{1/2}N`.
pub fn wp_gaussian(g1: &GaussianLaw, g2: &GaussianLaw, p: f64) -> Result<(f64, f64)> {
    if g1.dim() != g2.dim() {
        return Err(Error::InvalidArgument(format!("dimensions differ: {} vs {}", g1.dim(), g2.dim())));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {p}")));
    }
    let delta = &g1.mean - &g2.mean;
    if g1.dim() == 1 {
        let kappa = g1.covariance[(0, 0)].max(0.0).sqrt() - g2.covariance[(0, 0)].max(0.0).sqrt();
        return Ok((gaussian_shift_moment(delta[0], kappa, p)?, 0.0));
    }
    let r2 = sqrtm_psd(&g2.covariance);
    let cross = sqrtm_psd(&(&r2 * &g1.covariance * &r2));
    let bures = (g1.covariance.trace() + g2.covariance.trace() - 2.0 * cross.trace()).max(0.0);
    let w2 = (delta.norm_squared() + bures).sqrt();
    if p == 2.0 {
        return Ok((w2, 0.0));
    }
    let a = sqrtm_psd(&g1.covariance) - &r2;
    let m = g1.dim() as f64;
    let delta_p = if p <= 2.0 {
        a.norm()
    } else {
        let chi = (2f64.powf(p / 2.0) * gamma((m + p) / 2.0) / gamma(m / 2.0)).powf(1.0 / p);
        norm2(&a) * chi
    };
    let gap = delta.norm();
    let lo = if p >= 2.0 { gap.max(w2) } else { gap };
    let hi = if p <= 2.0 { (gap + delta_p).min(w2) } else { gap + delta_p };
    let hi = hi.max(lo);
    Ok((0.5 * (lo + hi), 0.5 * (hi - lo)))
}

/// Density of the unit symmetric stable law `E e^{izL} = e^{-|z|^α}` on a
/// wide grid, cached per call site by the caller.
pub fn unit_stable_density(alpha: f64, half_width: f64, h: f64) -> Result<CfDensity> {
    let n = (2.0 * half_width / h).round() as usize | 1;
    density_from_cf(&StableLaw::new(alpha, 1.0, 0.0)?, &symmetric_grid(n, h))
}

/// `W_p` between two stable laws with the same α, `p < α`:
/// `(E|Δlocation + Δdispersion·L|^p)^{1/p}` under the comonotone coupling,
/// integrated against a CF-inverted density with an analytic Pareto tail
/// beyond the grid. Returns `(value, tail contribution)`.
pub fn wp_stable(s1: &StableLaw, s2: &StableLaw, p: f64, unit: &CfDensity) -> Result<(f64, f64)> {
    if s1.alpha != s2.alpha {
        return Err(Error::UnsupportedCase("stable laws with different α".into()));
    }
    let alpha = s1.alpha;
    if p >= alpha {
        return Err(Error::MomentViolation { p, alpha });
    }
    let b = s1.location - s2.location;
    let a = s1.dispersion() - s2.dispersion();
    if a == 0.0 {
        return Ok((b.abs(), 0.0));
    }
    let grid = &unit.grid;
    let body = trapezoid(grid, |i| (b + a * grid[i]).abs().powf(p) * unit.density[i]);
    // P(L > x) ~ Γ(α) sin(πα/2)/π · x^{-α}; density ~ α·that/x.
    let c_tail = gamma(alpha) * (PI * alpha / 2.0).sin() / PI * alpha;
    let edge = grid[grid.len() - 1];
    let tail_f = |x: f64| {
        let v = c_tail * x.powf(-1.0 - alpha);
        ((b + a * x).abs().powf(p) + (b - a * x).abs().powf(p)) * v
    };
    let tail = crate::quad::integrate_to_infinity(tail_f, edge, 0.0, 1e-10)?;
    Ok(((body + tail.value).powf(1.0 / p), tail.value))
}

/// Univariate total variation profile
/// `erf(e^{-λrw}|x| / (2√(2R0)))`.
pub fn profile_tv_univariate(lambda: f64, w: f64, x: f64, r0: f64, r: f64) -> Result<f64> {
    if !(r0 > 0.0) {
        return Err(Error::SingularLimitLaw);
    }
    Ok(erf((-lambda * r * w).exp() * x.abs() / (2.0 * SQRT_2 * r0.sqrt())))
}

/// `d_TV(λ^{1-ℓ} e^{-λrw} v + Z, Z)`.
pub fn profile_tv(lambda: f64, ell: usize, w: f64, v: &[f64], z: &GaussianLaw, r: f64) -> Result<f64> {
    if v.len() != z.dim() {
        return Err(Error::InvalidArgument(format!("v has length {}, Z has dim {}", v.len(), z.dim())));
    }
    if mahalanobis(&symmetrize(&z.covariance), &DVector::from_element(z.dim(), 0.0)).is_none() {
        return Err(Error::SingularLimitLaw);
    }
    let amp = lambda.powf(1.0 - ell as f64) * (-lambda * r * w).exp();
    let shifted = z.affine(&(DVector::from_column_slice(v) * amp), 1.0);
    tv_gaussian(&shifted, z)
}

/// `λ^{1-ℓ} e^{-λrw} ‖v‖`.
pub fn profile_wp(lambda: f64, ell: usize, w: f64, v: &[f64], r: f64) -> f64 {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    lambda.powf(1.0 - ell as f64) * (-lambda * r * w).exp() * norm
}

/// Quantile of `N(mean, var)`.
pub fn gaussian_quantile(mean: f64, var: f64) -> impl Fn(f64) -> f64 {
    let sd = var.max(0.0).sqrt();
    move |u| mean + sd * norm_quantile(u)
}

/// Brute-force Scheffé integral `(1/2)∫|f1 - f2|` for univariate Gaussians.
pub fn tv_gaussian_quadrature(m1: f64, v1: f64, m2: f64, v2: f64, tol: f64) -> Result<f64> {
    let pdf = |x: f64, m: f64, v: f64| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
    let s = v1.max(v2).sqrt();
    let lo = m1.min(m2) - 40.0 * s;
    let hi = m1.max(m2) + 40.0 * s;
    let q = integrate(|x| (pdf(x, m1, v1) - pdf(x, m2, v2)).abs(), lo, hi, tol, 0.0)?;
    Ok(0.5 * q.value)
}
