//! Spectral analysis of the drift matrix.
//!
//! For a stable drift `Λ` and an initial datum `x`, the decay of `e^{-Λt}x`
//! is governed by the eigenvalues whose generalized eigenspaces `x` actually
//! touches. Writing `λ` for the smallest real part among them and `ℓ` for the
//! longest Jordan chain hit at that real part,
//!
//! ```text
//! e^{λt} t^{1-ℓ} e^{-Λt} x  ≈  v(t;x) = Σ_j e^{iθ_j t} v_j
//! ```
//!
//! with a bounded, quasi-periodic `v(t;x)`. This module extracts
//! `(λ, ℓ, θ_j, v_j)`, samples the accumulation set of `v(t;x)` and builds
//! the cut-off time scale.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{expm, norm2};
use crate::simulate::ScaleFunction;
use crate::{Error, Result};

const STABILITY_TOL: f64 = 1e-10;
const CLUSTER_TOL: f64 = 1e-5;
const REAL_PART_TOL: f64 = 1e-8;
const EXCITATION_TOL: f64 = 1e-10;
const CHAIN_TOL: f64 = 1e-7;
const MAX_EXPONENT: f64 = 700.0;

/// A drift matrix whose eigenvalues all have positive real part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableMatrix {
    pub dim: usize,
    pub entries: DMatrix<f64>,
    /// `min Re μ` over the eigenvalues `μ` of `Λ`.
    pub spectral_margin: f64,
}

impl StableMatrix {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.entries.complex_eigenvalues().iter().copied().collect()
    }
}

pub fn validate_stability(matrix: &DMatrix<f64>) -> Result<StableMatrix> {
    if !matrix.is_square() || matrix.nrows() == 0 {
        return Err(Error::InvalidMatrix(format!(
            "drift must be a non-empty square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("drift has non-finite entries".into()));
    }
    let margin = matrix.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if margin <= STABILITY_TOL {
        return Err(Error::NotStable { max_real_part: -margin });
    }
    Ok(StableMatrix { dim: matrix.nrows(), entries: matrix.clone(), spectral_margin: margin })
}

/// Asymptotic data of `e^{-Λt}x`.
///
/// Modes are ordered with the non-oscillating ones first, followed by
/// conjugate pairs `(θ, -θ)` with `v_{j+1} = conj(v_j)`. The `v_j` are the
/// projections of `x` on the dominant generalized eigenspaces pushed to the
/// top of their Jordan chains; only `v(t;x)` is basis independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantDecomposition {
    pub rate: f64,
    pub block_size: usize,
    pub mode_count: usize,
    pub angular_velocities: Vec<f64>,
    pub mode_vectors: Vec<Vec<Complex64>>,
}

struct Cluster {
    center: Complex64,
    size: usize,
}

fn cluster_eigenvalues(eigs: &[Complex64], tol: f64) -> Vec<Cluster> {
    let mut clusters: Vec<(Vec<Complex64>, Complex64)> = Vec::new();
    for &z in eigs {
        match clusters.iter_mut().find(|(_, c)| (*c - z).norm() <= tol) {
            Some((members, c)) => {
                members.push(z);
                *c = members.iter().sum::<Complex64>() / members.len() as f64;
            }
            None => clusters.push((vec![z], z)),
        }
    }
    clusters
        .into_iter()
        .map(|(members, mut c)| {
            if c.im.abs() <= tol {
                c.im = 0.0;
            }
            Cluster { center: c, size: members.len() }
        })
        .collect()
}

fn complexify(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|v| Complex64::new(v, 0.0))
}

/// Orthonormal basis of the `k` least-singular right vectors of `a`.
fn null_space(a: &DMatrix<Complex64>, k: usize) -> DMatrix<Complex64> {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut basis = DMatrix::zeros(n, k);
    for (col, &i) in order.iter().take(k).enumerate() {
        for r in 0..n {
            basis[(r, col)] = v_t[(i, r)].conj();
        }
    }
    basis
}

fn cnorm(v: &DVector<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Length of the Jordan chain generated by `y` under `n`.
fn chain_depth(n: &DMatrix<Complex64>, y: &DVector<Complex64>, n_norm: f64) -> usize {
    let scale = n_norm.max(1.0);
    let y_norm = cnorm(y);
    let mut w = y.clone();
    for q in 1..=y.len() {
        w = n * w;
        if cnorm(&w) <= CHAIN_TOL * y_norm * scale.powi(q as i32) {
            return q;
        }
    }
    y.len()
}

pub fn dominant_decomposition(a: &StableMatrix, x: &[f64]) -> Result<DominantDecomposition> {
    let m = a.dim;
    if x.len() != m {
        return Err(Error::InvalidArgument(format!("initial datum has length {}, drift is {m}x{m}", x.len())));
    }
    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if x_norm <= 1e-14 {
        return Err(Error::ZeroInitialDatum(x_norm));
    }
    let lam = complexify(&a.entries);
    let scale = norm2(&a.entries).max(1.0);
    let clusters = cluster_eigenvalues(&a.eigenvalues(), CLUSTER_TOL * scale);

    // Generalized eigenspace bases, stacked, then x expressed in that basis.
    let id = DMatrix::<Complex64>::identity(m, m);
    let mut stacked = DMatrix::<Complex64>::zeros(m, m);
    let mut offsets = Vec::with_capacity(clusters.len());
    let mut col = 0;
    for c in &clusters {
        let shifted = &lam - &id * c.center;
        let mut power = id.clone();
        for _ in 0..c.size {
            power = &power * &shifted;
        }
        let basis = null_space(&power, c.size);
        stacked.columns_mut(col, c.size).copy_from(&basis);
        offsets.push(col);
        col += c.size;
    }
    let xc = DVector::from_iterator(m, x.iter().map(|&v| Complex64::new(v, 0.0)));
    let coeffs = stacked
        .clone()
        .lu()
        .solve(&xc)
        .ok_or_else(|| Error::InvalidMatrix("generalized eigenspaces are numerically dependent".into()))?;

    struct Excited {
        center: Complex64,
        depth: usize,
        y: DVector<Complex64>,
        n: DMatrix<Complex64>,
    }
    let mut excited = Vec::new();
    for (c, &off) in clusters.iter().zip(&offsets) {
        let y = stacked.columns(off, c.size) * coeffs.rows(off, c.size);
        if cnorm(&y) <= EXCITATION_TOL * x_norm {
            continue;
        }
        let n = &lam - &id * c.center;
        let n_norm = n.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let depth = chain_depth(&n, &y, n_norm);
        excited.push(Excited { center: c.center, depth, y, n });
    }
    let rate = excited.iter().map(|e| e.center.re).fold(f64::INFINITY, f64::min);
    let dominant: Vec<&Excited> = excited.iter().filter(|e| (e.center.re - rate).abs() <= REAL_PART_TOL).collect();
    let block_size = dominant.iter().map(|e| e.depth).max().unwrap_or(1);

    let top_of_chain = |e: &Excited| -> Vec<Complex64> {
        let mut w = e.y.clone();
        let mut fact = 1.0;
        for k in 1..block_size {
            w = -(&e.n * w);
            fact *= k as f64;
        }
        w.iter().map(|z| z / fact).collect()
    };

    let mut real_modes = Vec::new();
    let mut pairs = Vec::new();
    for e in dominant.iter().filter(|e| e.depth == block_size) {
        let theta = -e.center.im;
        if theta == 0.0 {
            let v = top_of_chain(e).into_iter().map(|z| Complex64::new(z.re, 0.0)).collect();
            real_modes.push(v);
        } else if theta > 0.0 {
            pairs.push((theta, top_of_chain(e)));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut angular_velocities = vec![0.0; real_modes.len()];
    let mut mode_vectors = real_modes;
    for (theta, v) in pairs {
        let conj: Vec<Complex64> = v.iter().map(|z| z.conj()).collect();
        angular_velocities.push(theta);
        mode_vectors.push(v);
        angular_velocities.push(-theta);
        mode_vectors.push(conj);
    }
    Ok(DominantDecomposition { rate, block_size, mode_count: mode_vectors.len(), angular_velocities, mode_vectors })
}

/// `v(t;x) = Σ_j e^{iθ_j t} v_j`, real by conjugate pairing.
pub fn dominant_trajectory(dec: &DominantDecomposition, t: f64) -> Vec<f64> {
    let m = dec.mode_vectors.first().map_or(0, Vec::len);
    let mut out = vec![0.0; m];
    for (theta, v) in dec.angular_velocities.iter().zip(&dec.mode_vectors) {
        let phase = Complex64::from_polar(1.0, theta * t);
        for (o, z) in out.iter_mut().zip(v) {
            *o += (phase * z).re;
        }
    }
    out
}

/// Numerical rank of the mode vectors (singular values above `tol·σ_max`).
pub fn mode_rank(dec: &DominantDecomposition, tol: f64) -> usize {
    let m = dec.mode_vectors.first().map_or(0, Vec::len);
    let k = dec.mode_vectors.len();
    let mat = DMatrix::from_fn(m, k, |i, j| dec.mode_vectors[j][i]);
    let sv = mat.svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&s| s > tol * top).count()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// `‖e^{λt} t^{1-ℓ} e^{-Λt}x - v(t;x)‖` through a direct `e^{-Λt}`.
///
/// Fails with [`Error::Overflow`] once `e^{λt}` is out of range; see
/// [`hg_residual_scaled`] for the shifted evaluation.
pub fn hg_residual(a: &StableMatrix, x: &[f64], dec: &DominantDecomposition, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::InvalidArgument(format!("residual time must be positive, got {t}")));
    }
    if dec.rate * t > MAX_EXPONENT {
        return Err(Error::Overflow(dec.rate * t));
    }
    let e = expm(&(&a.entries * (-t)));
    let factor = (dec.rate * t).exp() / t.powi(dec.block_size as i32 - 1);
    let y = e * DVector::from_column_slice(x) * factor;
    Ok(euclid(y.as_slice(), &dominant_trajectory(dec, t)))
}

/// Same quantity as [`hg_residual`], computed as `e^{-(Λ-λI)t}x / t^{ℓ-1}`
/// so that no intermediate over- or underflows.
pub fn hg_residual_scaled(a: &StableMatrix, x: &[f64], dec: &DominantDecomposition, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::InvalidArgument(format!("residual time must be positive, got {t}")));
    }
    let shifted = &a.entries - DMatrix::identity(a.dim, a.dim) * dec.rate;
    let e = expm(&(shifted * (-t)));
    let y = e * DVector::from_column_slice(x) / t.powi(dec.block_size as i32 - 1);
    Ok(euclid(y.as_slice(), &dominant_trajectory(dec, t)))
}

/// Smallest `T = 2^k` (k ≥ 0) with scaled residual `≤ tol`.
pub fn residual_horizon(a: &StableMatrix, x: &[f64], dec: &DominantDecomposition, tol: f64) -> Result<f64> {
    let mut t = 1.0;
    for _ in 0..48 {
        if hg_residual_scaled(a, x, dec, t)? <= tol {
            return Ok(t);
        }
        t *= 2.0;
    }
    Err(Error::SlowDecay(hg_residual_scaled(a, x, dec, t)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaKind {
    Point,
    FiniteOrbit,
    TorusClosure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaLimitSet {
    pub kind: OmegaKind,
    pub samples: Vec<Vec<f64>>,
    pub diameter: f64,
}

const MAX_DENOMINATOR: u64 = 64;
const RELATION_TOL: f64 = 1e-9;

/// Best rational approximation `p/q` of `x` with `q ≤ 64`, if within tolerance.
fn small_rational(x: f64) -> Option<(i64, u64)> {
    for q in 1..=MAX_DENOMINATOR {
        let p = (x * q as f64).round();
        if (x - p / q as f64).abs() <= RELATION_TOL * x.abs().max(1.0) {
            return Some((p as i64, q));
        }
    }
    None
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Samples the accumulation set of `v(t;x)`.
///
/// `kind` is `FiniteOrbit` when every nonzero `θ_j/2π` is a rational with
/// denominator at most 64 (the orbit sampled at integer times is finite).
/// Samples cover the continuous-time orbit closure: a uniform grid over a
/// common period when the frequencies are commensurate, otherwise a
/// Kronecker sequence on the torus of phases.
pub fn omega_limit_set(dec: &DominantDecomposition, resolution: usize) -> Result<OmegaLimitSet> {
    if resolution < 16 {
        return Err(Error::InvalidArgument(format!("resolution must be at least 16, got {resolution}")));
    }
    let freqs: Vec<f64> = dec.angular_velocities.iter().copied().filter(|&th| th > 0.0).collect();
    if freqs.is_empty() {
        let v = dominant_trajectory(dec, 0.0);
        return Ok(OmegaLimitSet { kind: OmegaKind::Point, samples: vec![v], diameter: 0.0 });
    }
    let kind = if freqs.iter().all(|th| small_rational(th / (2.0 * PI)).is_some()) {
        OmegaKind::FiniteOrbit
    } else {
        OmegaKind::TorusClosure
    };

    let base = freqs[0];
    let ratios: Option<Vec<(i64, u64)>> = freqs.iter().map(|th| small_rational(th / base)).collect();
    let samples: Vec<Vec<f64>> = match ratios {
        Some(ratios) => {
            let lcm = ratios.iter().fold(1u64, |acc, &(_, q)| acc / gcd(acc, q) * q);
            let period = 2.0 * PI * lcm as f64 / base;
            (0..resolution).map(|i| dominant_trajectory(dec, period * i as f64 / resolution as f64)).collect()
        }
        None => torus_samples(dec, &freqs, resolution * 4 * freqs.len()),
    };
    let mut diameter: f64 = 0.0;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            diameter = diameter.max(euclid(a, b));
        }
    }
    Ok(OmegaLimitSet { kind, samples, diameter })
}

/// Evaluates `v` at independent phases drawn from an `R_d` sequence.
fn torus_samples(dec: &DominantDecomposition, freqs: &[f64], count: usize) -> Vec<Vec<f64>> {
    let d = freqs.len();
    // Generalized golden ratio: positive root of x^{d+1} = x + 1.
    let mut g: f64 = 2.0;
    for _ in 0..64 {
        g = (1.0 + g).powf(1.0 / (d as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=d).map(|k| g.powi(-(k as i32)).fract()).collect();
    let m = dec.mode_vectors[0].len();
    (0..count)
        .map(|i| {
            let mut out = vec![0.0; m];
            for (theta, v) in dec.angular_velocities.iter().zip(&dec.mode_vectors) {
                let phase = if *theta == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    let k = freqs.iter().position(|f| (f - theta.abs()).abs() <= 1e-12 * f).unwrap_or(0);
                    let angle = 2.0 * PI * (0.5 + i as f64 * alphas[k]).fract();
                    Complex64::from_polar(1.0, angle * theta.signum())
                };
                for (o, z) in out.iter_mut().zip(v) {
                    *o += (phase * z).re;
                }
            }
            out
        })
        .collect()
}

/// Cut-off time scales for a given noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSchedule {
    pub t_star: f64,
    pub t_cut: f64,
    pub epsilon: f64,
    pub window_w: f64,
}

impl CutoffSchedule {
    /// `t_cut + r·w`.
    pub fn time_at(&self, r: f64) -> f64 {
        self.t_cut + r * self.window_w
    }
}

/// `t* = ln(1/ε)/λ` and `t_cut = t* + ((ℓ-1)/λ) ln(λt*) - ln(σ(t*))/λ`.
pub fn cutoff_time_scale(
    lambda: f64,
    ell: usize,
    sigma: &ScaleFunction,
    epsilon: f64,
    w: f64,
) -> Result<CutoffSchedule> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if !(lambda > 0.0) || !(w > 0.0) || ell == 0 {
        return Err(Error::InvalidArgument(format!("need λ > 0, w > 0, ℓ ≥ 1 (got {lambda}, {w}, {ell})")));
    }
    let t_star = (1.0 / epsilon).ln() / lambda;
    let s = sigma.eval(t_star);
    if !(s > 0.0) {
        return Err(Error::NonPositiveScale(s));
    }
    let jordan = if ell > 1 { (ell as f64 - 1.0) / lambda * (lambda * t_star).ln() } else { 0.0 };
    let t_cut = t_star + jordan - sigma.ln_eval(t_star) / lambda;
    Ok(CutoffSchedule { t_star, t_cut, epsilon, window_w: w })
}

/// `(t^{ℓ-1} e^{-λt} / (ε σ(t)), λ^{1-ℓ} e^{-λrw})` at `t = t_cut + r·w`.
///
/// The first entry is the exact amplitude of the dominant term once the
/// process is renormalized by `ε σ(t)`; it tends to the second as `ε → 0`.
pub fn asymptotic_prefactor(
    sched: &CutoffSchedule,
    r: f64,
    lambda: f64,
    ell: usize,
    sigma: &ScaleFunction,
) -> Result<(f64, f64)> {
    let t = sched.time_at(r);
    if t <= 0.0 {
        return Err(Error::NegativeTime { r, t });
    }
    let k = ell as f64 - 1.0;
    let ln_finite = k * t.ln() - lambda * t - sched.epsilon.ln() - sigma.ln_eval(t);
    let limit = lambda.powf(-k) * (-lambda * r * sched.window_w).exp();
    Ok((ln_finite.exp(), limit))
}
