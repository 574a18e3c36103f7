//! Drivers, path ensembles and closed-form marginal laws.
//!
//! Every random path is generated from a ChaCha8 stream keyed by
//! `(seed, path index)`, so ensembles are bit-identical regardless of how
//! many worker threads rayon uses.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::linalg::{expm, norm2};
use crate::metrics::{GaussianLaw, LawDescriptor, StableLaw};
use crate::quad::{integrate, integrate_to_infinity};
use crate::special::gamma;
use crate::spectral::StableMatrix;
use crate::{Error, Result};

/// Deterministic scale `σ_t` dividing the fluctuations at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleFunction {
    One,
    Sqrt,
    /// `t^exponent`.
    Power {
        exponent: f64,
    },
    /// `e^{rate·t}`; not slowly varying, kept as a negative control.
    Exponential {
        rate: f64,
    },
    /// Piecewise-linear interpolation of `ln σ` between `(t, σ)` knots,
    /// constant beyond the end knots.
    Table {
        points: Vec<(f64, f64)>,
    },
}

impl ScaleFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ScaleFunction::One => 1.0,
            _ => self.ln_eval(t).exp(),
        }
    }

    /// `ln σ_t`, finite even where `σ_t` itself would overflow.
    pub fn ln_eval(&self, t: f64) -> f64 {
        match self {
            ScaleFunction::One => 0.0,
            ScaleFunction::Sqrt => 0.5 * t.ln(),
            ScaleFunction::Power { exponent } => exponent * t.ln(),
            ScaleFunction::Exponential { rate } => rate * t,
            ScaleFunction::Table { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if t <= first.0 {
                    return first.1.ln();
                }
                if t >= last.0 {
                    return last.1.ln();
                }
                let k = points.partition_point(|p| p.0 <= t);
                let (t0, s0) = points[k - 1];
                let (t1, s1) = points[k];
                let u = (t - t0) / (t1 - t0);
                (1.0 - u) * s0.ln() + u * s1.ln()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ScaleFunction::Table { points } = self {
            if points.is_empty() {
                return Err(Error::InvalidArgument("scale table is empty".into()));
            }
            if points.iter().any(|p| !(p.1 > 0.0) || !p.0.is_finite()) {
                return Err(Error::NonPositiveScale(points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)));
            }
            if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::InvalidArgument("scale table abscissae must increase".into()));
            }
        }
        Ok(())
    }

    pub fn tag(&self) -> String {
        match self {
            ScaleFunction::One => "1".into(),
            ScaleFunction::Sqrt => "sqrt(t)".into(),
            ScaleFunction::Power { exponent } => format!("t^{exponent}"),
            ScaleFunction::Exponential { rate } => format!("exp({rate}t)"),
            ScaleFunction::Table { points } => format!("table[{}]", points.len()),
        }
    }
}

/// Stationary covariance kernels `k(s)` for scalar Gaussian drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceKernel {
    /// `variance · e^{-θ|s|}`.
    Exponential { theta: f64, variance: f64 },
    /// Stationary fractional OU covariance.
    FractionalOu { lambda: f64, hurst: f64 },
}

impl CovarianceKernel {
    pub fn eval(&self, s: f64) -> Result<f64> {
        match *self {
            CovarianceKernel::Exponential { theta, variance } => Ok(variance * (-theta * s.abs()).exp()),
            CovarianceKernel::FractionalOu { lambda, hurst } => fou_stationary_covariance(lambda, hurst, s.abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverKind {
    Brownian,
    Fbm { hurst: f64 },
    Stable { alpha: f64 },
    StationaryGaussian { kernel: CovarianceKernel },
}

/// Uniform time grid `t_k = k·step`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step: f64,
    pub len: usize,
}

impl TimeGrid {
    /// Grid on `[0, horizon]` with step as close to `step` as possible while
    /// landing exactly on `horizon`.
    pub fn covering(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon > 0.0 && step > 0.0) {
            return Err(Error::InvalidArgument(format!("grid needs positive horizon and step, got {horizon}, {step}")));
        }
        let n = (horizon / step).ceil().max(1.0) as usize;
        Ok(TimeGrid { step: horizon / n as f64, len: n + 1 })
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|k| k as f64 * self.step).collect()
    }

    pub fn horizon(&self) -> f64 {
        (self.len - 1) as f64 * self.step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverSpec {
    pub kind: DriverKind,
    pub dim: usize,
    pub grid: TimeGrid,
}

impl DriverSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.grid.len < 2 || !(self.grid.step > 0.0) {
            return Err(Error::InvalidArgument("driver needs dim ≥ 1 and a grid with at least two points".into()));
        }
        match &self.kind {
            DriverKind::Fbm { hurst } if !(*hurst > 0.0 && *hurst < 1.0) => {
                Err(Error::InadmissibleRange { name: "hurst".into(), reason: format!("{hurst} not in (0,1)") })
            }
            DriverKind::Stable { alpha } if !(*alpha > 1.0 && *alpha < 2.0) => {
                Err(Error::InadmissibleRange { name: "alpha".into(), reason: format!("{alpha} not in (1,2)") })
            }
            _ => Ok(()),
        }
    }
}

/// `n_paths × len × dim` values stored path-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub dim: usize,
    pub times: Vec<f64>,
    pub seed: u64,
    pub has_jumps: bool,
    pub data: Vec<f64>,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let stride = self.len() * self.dim;
        &self.data[p * stride..(p + 1) * stride]
    }

    pub fn value(&self, p: usize, k: usize) -> &[f64] {
        let base = (p * self.len() + k) * self.dim;
        &self.data[base..base + self.dim]
    }

    /// All paths' values at grid index `k`.
    pub fn slice_at(&self, k: usize) -> Vec<Vec<f64>> {
        (0..self.n_paths).map(|p| self.value(p, k).to_vec()).collect()
    }
}

/// RNG for path `index` of an experiment keyed by `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mixes a seed with cell coordinates so that different experiment cells
/// draw from unrelated streams.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Symmetric α-stable variate with `E e^{izL} = e^{-|z|^α}`
/// (Chambers–Mallows–Stuck).
pub fn stable_variate<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = rng.sample(Exp1);
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// Gaussian sampler for a stationary increment sequence of fixed length.
enum StationarySampler {
    /// Square roots of circulant eigenvalues divided by `√M`.
    Circulant {
        sqrt_eig: Vec<f64>,
    },
    Cholesky {
        lower: DMatrix<f64>,
    },
}

impl StationarySampler {
    fn new(autocov: &[f64]) -> Result<Self> {
        let n = autocov.len();
        let m = 2 * (n - 1).max(1);
        let mut row: Vec<Complex64> = (0..m)
            .map(|j| {
                let k = if j < n { j } else { m - j };
                Complex64::new(autocov[k.min(n - 1)], 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut row);
        let top = row.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        if row.iter().all(|z| z.re >= -1e-10 * top.max(1e-300)) {
            let sqrt_eig = row.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
            return Ok(StationarySampler::Circulant { sqrt_eig });
        }
        let gram = DMatrix::from_fn(n, n, |i, j| autocov[i.abs_diff(j)]);
        let min_eig = gram.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 * top.max(1.0) {
            return Err(Error::EmbeddingFailure(format!("Gram matrix has eigenvalue {min_eig:.3e}")));
        }
        let jitter = DMatrix::identity(n, n) * (1e-14 * top.max(1e-300));
        let lower = (gram + jitter)
            .cholesky()
            .ok_or_else(|| Error::EmbeddingFailure("Cholesky factorization failed".into()))?
            .l();
        Ok(StationarySampler::Cholesky { lower })
    }

    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, fft: &dyn rustfft::Fft<f64>) -> Vec<f64> {
        match self {
            StationarySampler::Circulant { sqrt_eig } => {
                let mut buf: Vec<Complex64> = sqrt_eig
                    .iter()
                    .map(|s| {
                        Complex64::new(
                            s * rng.sample::<f64, _>(StandardNormal),
                            s * rng.sample::<f64, _>(StandardNormal),
                        )
                    })
                    .collect();
                fft.process(&mut buf);
                buf.iter().take(n).map(|z| z.re).collect()
            }
            StationarySampler::Cholesky { lower } => {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                (lower * z).iter().copied().collect()
            }
        }
    }
}

/// Autocovariance of fractional Gaussian noise with step `h`.
pub fn fgn_autocovariance(hurst: f64, h: f64, n: usize) -> Vec<f64> {
    let two_h = 2.0 * hurst;
    let scale = h.powf(two_h);
    (0..n)
        .map(|k| {
            let k = k as f64;
            0.5 * scale * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
        })
        .collect()
}

pub fn sample_driver(spec: &DriverSpec, n: usize, seed: u64) -> Result<PathEnsemble> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("ensemble needs at least one path".into()));
    }
    let len = spec.grid.len;
    let h = spec.grid.step;
    let dim = spec.dim;
    let steps = len - 1;

    // Correlated kinds share one factorization across paths.
    let sampler = match &spec.kind {
        DriverKind::Fbm { hurst } => Some(StationarySampler::new(&fgn_autocovariance(*hurst, h, steps))?),
        DriverKind::StationaryGaussian { kernel } => {
            let acov = (0..len).map(|k| kernel.eval(k as f64 * h)).collect::<Result<Vec<_>>>()?;
            Some(StationarySampler::new(&acov)?)
        }
        _ => None,
    };
    let fft_len = match &sampler {
        Some(StationarySampler::Circulant { sqrt_eig }) => sqrt_eig.len(),
        _ => 1,
    };
    let fft = FftPlanner::new().plan_fft_forward(fft_len);

    let stride = len * dim;
    let mut data = vec![0.0; n * stride];
    data.par_chunks_mut(stride).enumerate().for_each(|(p, out)| {
        let mut rng = path_rng(seed, p as u64);
        for c in 0..dim {
            let column: Vec<f64> = match &spec.kind {
                DriverKind::Brownian => cumulative((0..steps).map(|_| h.sqrt() * rng.sample::<f64, _>(StandardNormal))),
                DriverKind::Stable { alpha } => {
                    let s = h.powf(1.0 / alpha);
                    cumulative((0..steps).map(|_| s * stable_variate(*alpha, &mut rng)))
                }
                DriverKind::Fbm { .. } => {
                    let inc = sampler.as_ref().unwrap().sample(steps, &mut rng, fft.as_ref());
                    cumulative(inc.into_iter())
                }
                DriverKind::StationaryGaussian { .. } => sampler.as_ref().unwrap().sample(len, &mut rng, fft.as_ref()),
            };
            for (k, v) in column.into_iter().enumerate() {
                out[k * dim + c] = v;
            }
        }
    });
    Ok(PathEnsemble {
        n_paths: n,
        dim,
        times: spec.grid.times(),
        seed,
        has_jumps: matches!(spec.kind, DriverKind::Stable { .. }),
        data,
    })
}

fn cumulative(inc: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    std::iter::once(0.0)
        .chain(inc.map(|d| {
            acc += d;
            acc
        }))
        .collect()
}

/// `Γ(2H+1) λ^{-2H} / 2`, the stationary variance of the fractional OU process.
pub fn fou_stationary_variance(lambda: f64, hurst: f64) -> f64 {
    gamma(2.0 * hurst + 1.0) * lambda.powf(-2.0 * hurst) / 2.0
}

fn check_fou(lambda: f64, hurst: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::InadmissibleRange { name: "lambda".into(), reason: format!("{lambda} must be positive") });
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InadmissibleRange { name: "hurst".into(), reason: format!("{hurst} not in (0,1)") });
    }
    Ok(())
}

/// Stationary covariance `R(t) = E[U_t U_0]` of the fractional OU process
/// `dU = -λU dt + dB^H`.
///
/// Integrating the two-sided convolution by parts twice gives
///
/// ```text
/// R(t) = (H/2)·[∫_0^∞ e^{-λu}(t+u)^{2H-1} du - ∫_0^t e^{-λu}(t-u)^{2H-1} du] + e^{-λt} R(0)/2
/// ```
///
/// whose two integrals are smooth after the substitution `w = (t-u)^{2H}`.
/// For `H = 1/2` this collapses to `R(0) e^{-λt}`.
pub fn fou_stationary_covariance(lambda: f64, hurst: f64, t: f64) -> Result<f64> {
    check_fou(lambda, hurst)?;
    let t = t.abs();
    let r0 = fou_stationary_variance(lambda, hurst);
    if t == 0.0 {
        return Ok(r0);
    }
    if hurst == 0.5 {
        return Ok(r0 * (-lambda * t).exp());
    }
    let tol = 1e-13;
    let two_h = 2.0 * hurst;
    let far = integrate_to_infinity(|u| (-lambda * u).exp() * (t + u).powf(two_h - 1.0), 0.0, 0.0, tol)?;
    let near = integrate(|w| (-lambda * (t - w.powf(1.0 / two_h))).exp(), 0.0, t.powf(two_h), 0.0, tol)?;
    let near_value = near.value / two_h;
    let err = 0.5 * hurst * (far.error + near.error / two_h);
    if err > 1e-9 {
        return Err(Error::QuadratureFailure { tol: 1e-9, estimate: err });
    }
    Ok(0.5 * hurst * (far.value - near_value) + 0.5 * (-lambda * t).exp() * r0)
}

/// Law of `X^ε_t = e^{-λt}x + ε∫_0^t e^{-λ(t-s)} dB^H_s`; `t = ∞` gives the
/// limit `N(0, ε² R(0))`.
pub fn fou_marginal_law(lambda: f64, hurst: f64, epsilon: f64, x: f64, t: f64) -> Result<GaussianLaw> {
    check_fou(lambda, hurst)?;
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
    }
    let r0 = fou_stationary_variance(lambda, hurst);
    if t.is_infinite() {
        return Ok(GaussianLaw::scalar(0.0, epsilon * epsilon * r0));
    }
    let decay = (-lambda * t).exp();
    let var = epsilon * epsilon * fou_convolution_variance(lambda, hurst, t)?;
    Ok(GaussianLaw::scalar(decay * x, var))
}

/// `Var(∫_0^t e^{-λ(t-s)} dB^H_s) = R(0)(1 + e^{-2λt}) - 2e^{-λt}R(t)`.
pub fn fou_convolution_variance(lambda: f64, hurst: f64, t: f64) -> Result<f64> {
    if hurst == 0.5 {
        return Ok(-(-2.0 * lambda * t).exp_m1() / (2.0 * lambda));
    }
    let r0 = fou_stationary_variance(lambda, hurst);
    let decay = (-lambda * t).exp();
    let rt = fou_stationary_covariance(lambda, hurst, t)?;
    Ok((r0 * (1.0 + decay * decay) - 2.0 * decay * rt).max(0.0))
}

/// Pathwise `S_t = ∫_0^t e^{-Λ(t-s)} dD_s` for every path of `driver`.
///
/// Continuous drivers go through integration by parts,
/// `S_t = D_t - e^{-Λt}D_0 - ∫_0^t Λe^{-Λ(t-s)} D_s ds`, with the integral
/// accumulated by an exact trapezoid recursion. Jump drivers are summed over
/// their increments with midpoint decay.
pub fn stochastic_convolution(a: &StableMatrix, driver: &PathEnsemble) -> Result<PathEnsemble> {
    if driver.dim != a.dim {
        return Err(Error::InvalidArgument(format!("driver dim {} vs drift dim {}", driver.dim, a.dim)));
    }
    if driver.len() < 2 {
        return Err(Error::InvalidArgument("driver grid needs at least two points".into()));
    }
    let h = driver.times[1] - driver.times[0];
    let lam = &a.entries;
    let estimate = (norm2(lam) * h).powi(2) / 12.0;
    if !driver.has_jumps && estimate > 1e-4 {
        return Err(Error::GridTooCoarse(estimate));
    }
    let m = a.dim;
    let eh = expm(&(lam * (-h)));
    let half = expm(&(lam * (-0.5 * h)));
    let lam_eh = lam * &eh * (0.5 * h);
    let lam_half = lam * (0.5 * h);
    let len = driver.len();
    let stride = len * m;
    let mut data = vec![0.0; driver.n_paths * stride];
    data.par_chunks_mut(stride).enumerate().for_each(|(p, out)| {
        let path = driver.path(p);
        let d = |k: usize| DVector::from_column_slice(&path[k * m..(k + 1) * m]);
        if driver.has_jumps {
            let mut s = DVector::<f64>::zeros(m);
            for k in 1..len {
                s = &eh * s + &half * (d(k) - d(k - 1));
                out[k * m..(k + 1) * m].copy_from_slice(s.as_slice());
            }
        } else {
            let d0 = d(0);
            let mut integral = DVector::<f64>::zeros(m);
            let mut decayed = d0.clone();
            let mut prev = d0.clone();
            for k in 1..len {
                let cur = d(k);
                integral = &eh * integral + &lam_eh * &prev + &lam_half * &cur;
                decayed = &eh * decayed;
                let s = &cur - &decayed - &integral;
                out[k * m..(k + 1) * m].copy_from_slice(s.as_slice());
                prev = cur;
            }
        }
    });
    Ok(PathEnsemble {
        n_paths: driver.n_paths,
        dim: m,
        times: driver.times.clone(),
        seed: driver.seed,
        has_jumps: driver.has_jumps,
        data,
    })
}

/// Limit covariance of `S_t` for a stationary Gaussian driver with matrix
/// covariance `R_D(s) = E[D_{r+s} D_r^*]`:
///
/// ```text
/// Σ = R_D(0) - ∫ R_D(u) e^{-Λ*u} Λ* du - ∫ Λ e^{-Λu} R_D(u)* du
///            + ∫∫ Λ e^{-Λa} R_D(b-a) e^{-Λ*b} Λ* da db
/// ```
///
/// over `[0, horizon]`. Returns the symmetrized `Σ` and an error estimate
/// (quadrature plus truncation).
pub fn iterated_ou_limit_covariance(
    a: &StableMatrix,
    r_d: &dyn Fn(f64) -> DMatrix<f64>,
    horizon: f64,
    tol: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let m = a.dim;
    let lam = &a.entries;
    let lam_t = lam.transpose();
    let tail = norm2(&r_d(horizon)) + norm2(&r_d(0.0)) * (-a.spectral_margin * horizon).exp();
    if tail > tol {
        return Err(Error::SlowDecay(tail));
    }
    let qtol = (tol * 1e-3).max(1e-13);
    let flat = |mat: &DMatrix<f64>, out: &mut [f64]| out.copy_from_slice(mat.as_slice());

    let (cross, e1) = crate::quad::integrate_vec(
        |u, out| flat(&(r_d(u) * expm(&(&lam_t * (-u))) * &lam_t), out),
        m * m,
        0.0,
        horizon,
        qtol,
        1e-12,
    )?;
    let cross = DMatrix::from_column_slice(m, m, &cross);

    // Inner integral in b, split at the kink b = a.
    let inner = |x: f64| -> Result<(DMatrix<f64>, f64)> {
        let f = |b: f64, out: &mut [f64]| flat(&(r_d(b - x) * expm(&(&lam_t * (-b)))), out);
        let (lo, el) = crate::quad::integrate_vec(f, m * m, 0.0, x, qtol, 1e-12)?;
        let (hi, eh) = crate::quad::integrate_vec(f, m * m, x, horizon, qtol, 1e-12)?;
        let sum: Vec<f64> = lo.iter().zip(&hi).map(|(p, q)| p + q).collect();
        Ok((DMatrix::from_column_slice(m, m, &sum), el + eh))
    };
    let inner_err = std::sync::Mutex::new(0.0f64);
    let failure = std::sync::Mutex::new(None);
    let (double, e2) = crate::quad::integrate_vec(
        |x, out| match inner(x) {
            Ok((mat, err)) => {
                let e = expm(&(lam * (-x)));
                let mut acc = inner_err.lock().unwrap();
                *acc = acc.max(err);
                flat(&(lam * e * mat * &lam_t), out);
            }
            Err(e) => {
                *failure.lock().unwrap() = Some(e);
                out.iter_mut().for_each(|o| *o = 0.0);
            }
        },
        m * m,
        0.0,
        horizon,
        qtol,
        1e-12,
    )?;
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let double = DMatrix::from_column_slice(m, m, &double);
    let sigma = r_d(0.0) - &cross - cross.transpose() + double;
    let lam_norm = norm2(lam);
    let error = 2.0 * e1 + e2 + *inner_err.lock().unwrap() * lam_norm * lam_norm * horizon + tail;
    Ok(((&sigma + sigma.transpose()) * 0.5, error))
}

/// `(e^{-2λt}∫_0^t e^{2λs} τ(s)² ds, τ(∞)²/(2λ))`.
pub fn inhomogeneous_variance(lambda: f64, tau: &dyn Fn(f64) -> f64, tau_inf: f64, t: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::InadmissibleRange { name: "lambda".into(), reason: format!("{lambda} must be positive") });
    }
    let limit = tau_inf * tau_inf / (2.0 * lambda);
    if t <= 0.0 {
        return Ok((0.0, limit));
    }
    let value = integrate(|s| (-2.0 * lambda * (t - s)).exp() * tau(s).powi(2), 0.0, t, 1e-14, 1e-12)?;
    Ok((value.value, limit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegratedDriver {
    Gaussian,
    /// Stable noise with CF `exp(-c_alpha|z|^α)` per unit time.
    Stable {
        alpha: f64,
        c_alpha: f64,
    },
}

/// `∫_0^t (1 - e^{-λu})² du`.
pub fn integrated_ou_variance_factor(lambda: f64, t: f64) -> f64 {
    t + 2.0 * (-lambda * t).exp_m1() / lambda - (-2.0 * lambda * t).exp_m1() / (2.0 * lambda)
}

/// `(1/t)∫_0^t (1 - e^{-λu})^α du`.
pub fn stable_averaged_kernel(lambda: f64, alpha: f64, t: f64) -> Result<f64> {
    let q = integrate(|u| (-(-lambda * u).exp_m1()).powf(alpha), 0.0, t, 1e-14, 1e-12)?;
    Ok(q.value / t)
}

/// Law of `Z^ε_t = (Y^ε_t - y - x/λ)/σ_t` for the integrated OU process
/// `Y_t = y + ∫_0^t X_s ds`, with `σ_t = √t` (Gaussian) or `t^{1/α}`
/// (stable). `t = ∞` gives the limit law.
pub fn integrated_ou_law(lambda: f64, epsilon: f64, x: f64, t: f64, driver: IntegratedDriver) -> Result<LawDescriptor> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    match driver {
        IntegratedDriver::Gaussian => {
            let limit_var = (epsilon / lambda).powi(2);
            if t.is_infinite() {
                return Ok(LawDescriptor::Gaussian(GaussianLaw::scalar(0.0, limit_var)));
            }
            let mean = -x * (-lambda * t).exp() / (lambda * t.sqrt());
            let var = limit_var * integrated_ou_variance_factor(lambda, t) / t;
            Ok(LawDescriptor::Gaussian(GaussianLaw::scalar(mean, var)))
        }
        IntegratedDriver::Stable { alpha, c_alpha } => {
            let limit_scale = epsilon.powf(alpha) * c_alpha / lambda.powf(alpha);
            if t.is_infinite() {
                return Ok(LawDescriptor::Stable(StableLaw::new(alpha, limit_scale, 0.0)?));
            }
            let scale = limit_scale * stable_averaged_kernel(lambda, alpha, t)?;
            let location = -x * (-lambda * t).exp() / (lambda * t.powf(1.0 / alpha));
            Ok(LawDescriptor::Stable(StableLaw::new(alpha, scale, location)?))
        }
    }
}

/// One fractional OU path `X^ε` on `grid`, started at `x`.
pub fn fou_path<R: Rng + ?Sized>(
    lambda: f64,
    hurst: f64,
    epsilon: f64,
    x: f64,
    grid: &TimeGrid,
    sampler_cache: Option<&FgnSampler>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let h = grid.step;
    let steps = grid.len - 1;
    let inc: Vec<f64> = if hurst == 0.5 {
        (0..steps).map(|_| h.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect()
    } else {
        let own;
        let cache = match sampler_cache {
            Some(c) => c,
            None => {
                own = FgnSampler::new(hurst, *grid)?;
                &own
            }
        };
        cache.sample(rng)
    };
    let eh = (-lambda * h).exp();
    let estimate = (lambda * h).powi(2) / 12.0;
    if estimate > 1e-4 {
        return Err(Error::GridTooCoarse(estimate));
    }
    // Same trapezoid recursion as `stochastic_convolution`, scalar case.
    let mut d_prev = 0.0;
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(grid.len);
    out.push(x);
    for k in 1..grid.len {
        let d = d_prev + inc[k - 1];
        integral = eh * integral + 0.5 * h * lambda * (eh * d_prev + d);
        let s = d - integral;
        out.push((-lambda * k as f64 * h).exp() * x + epsilon * s);
        d_prev = d;
    }
    Ok(out)
}

/// Reusable fractional Gaussian noise sampler on a fixed grid.
pub struct FgnSampler {
    steps: usize,
    inner: StationarySampler,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl FgnSampler {
    pub fn new(hurst: f64, grid: TimeGrid) -> Result<Self> {
        let steps = grid.len - 1;
        let inner = StationarySampler::new(&fgn_autocovariance(hurst, grid.step, steps))?;
        let n = match &inner {
            StationarySampler::Circulant { sqrt_eig } => sqrt_eig.len(),
            _ => 1,
        };
        Ok(FgnSampler { steps, inner, fft: FftPlanner::new().plan_fft_forward(n) })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.inner.sample(self.steps, rng, self.fft.as_ref())
    }
}

/// Replicas of the average of `N` independent fractional OU paths.
///
/// The average of i.i.d. Gaussian processes with common mean has the law of
/// one such process with noise scaled by `1/√N`, so each replica is a single
/// fractional OU path with `ε_N = N^{-1/2}`.
pub fn average_ensemble(
    lambda: f64,
    hurst: f64,
    x: f64,
    n_average: u64,
    grid: &TimeGrid,
    replicas: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    check_fou(lambda, hurst)?;
    if n_average == 0 || replicas == 0 {
        return Err(Error::InvalidArgument("need N ≥ 1 and at least one replica".into()));
    }
    let eps = 1.0 / (n_average as f64).sqrt();
    let cache = if hurst == 0.5 { None } else { Some(FgnSampler::new(hurst, *grid)?) };
    let paths: Vec<Result<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            fou_path(lambda, hurst, eps, x, grid, cache.as_ref(), &mut rng)
        })
        .collect();
    let mut data = Vec::with_capacity(replicas * grid.len);
    for p in paths {
        data.extend(p?);
    }
    Ok(PathEnsemble { n_paths: replicas, dim: 1, times: grid.times(), seed, has_jumps: false, data })
}
