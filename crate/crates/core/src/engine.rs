//! Distance curves, profile classification and convergence reports.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::sqrtm_psd;
use crate::metrics::{
    bootstrap_stderr, density_from_cf, gaussian_quantile, profile_tv, profile_wp, symmetric_grid, tv_from_densities,
    tv_gaussian, tv_gaussian_with_bound, unit_stable_density, wp_empirical, wp_gaussian, wp_sample_vs_table, wp_stable,
    CfDensity, GaussianLaw, LawDescriptor, StableLaw,
};
use crate::scenarios::{marginal_law, marginal_samples, Evaluation, Metric, Scenario};
use crate::simulate::{mix_seed, path_rng, ScaleFunction};
use crate::spectral::{
    cutoff_time_scale, dominant_decomposition, dominant_trajectory, omega_limit_set, CutoffSchedule,
    DominantDecomposition, OmegaKind,
};
use crate::{Error, Result};

/// Bootstrap resamples for Monte Carlo standard errors.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// One point of a distance or profile curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r: f64,
    /// Evaluation time `t_cut + r·w`; absent on pure profile curves.
    pub t: Option<f64>,
    pub measured: Option<f64>,
    pub theoretical: f64,
    /// Monte Carlo standard error, or a deterministic error bound for exact
    /// evaluations (0 when the value is exact to rounding).
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub metric: Metric,
    pub epsilon: Option<f64>,
    pub schedule: Option<CutoffSchedule>,
    pub points: Vec<CurvePoint>,
}

impl ProfileCurve {
    /// `sup_r |measured - theoretical|` and the standard error at the argmax.
    pub fn sup_gap(&self) -> Option<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.measured.map(|m| ((m - p.theoretical).abs(), p.stderr)))
            .max_by(|a, b| a.0.total_cmp(&b.0))
    }
}

/// `λ^{1-ℓ} e^{-λrw}`.
pub fn profile_amplitude(dec: &DominantDecomposition, r: f64, w: f64) -> f64 {
    dec.rate.powf(1.0 - dec.block_size as f64) * (-dec.rate * r * w).exp()
}

/// Evaluates `d(law, Z)` for the scenario's metric; returns `(value, stderr)`.
struct Evaluator {
    metric: Metric,
    z: LawDescriptor,
    unit_stable: Option<CfDensity>,
}

fn stable_tv(a: &StableLaw, b: &StableLaw) -> Result<f64> {
    let small = a.dispersion().min(b.dispersion());
    let large = a.dispersion().max(b.dispersion());
    let h = small / 40.0;
    let half = 4000.0 * large + a.location.abs().max(b.location.abs());
    let n = ((2.0 * half / h).ceil() as usize) | 1;
    let grid = symmetric_grid(n, h);
    let fa = density_from_cf(a, &grid)?;
    let fb = density_from_cf(b, &grid)?;
    Ok(tv_from_densities(&grid, &fa.density, &fb.density)?.value)
}

impl Evaluator {
    fn new(metric: Metric, z: LawDescriptor) -> Result<Self> {
        let unit_stable = match (&z, metric) {
            (LawDescriptor::Stable(st), Metric::Wasserstein { .. }) => {
                Some(unit_stable_density(st.alpha, 4000.0, 0.01)?)
            }
            _ => None,
        };
        Ok(Evaluator { metric, z, unit_stable })
    }

    fn exact(&self, law: &LawDescriptor) -> Result<(f64, f64)> {
        match (law, &self.z, self.metric) {
            (LawDescriptor::Gaussian(g), LawDescriptor::Gaussian(z), Metric::Tv) => tv_gaussian_with_bound(g, z),
            (LawDescriptor::Gaussian(g), LawDescriptor::Gaussian(z), Metric::Wasserstein { p }) => wp_gaussian(g, z, p),
            (LawDescriptor::Stable(a), LawDescriptor::Stable(z), Metric::Tv) => Ok((stable_tv(a, z)?, 0.0)),
            (LawDescriptor::Stable(a), LawDescriptor::Stable(z), Metric::Wasserstein { p }) => {
                let unit = self.unit_stable.as_ref().expect("built for stable W_p");
                let (v, tail) = wp_stable(a, z, p, unit)?;
                Ok((v, tail))
            }
            _ => Err(Error::UnsupportedCase("law and limit law families differ".into())),
        }
    }

    /// `d(ρv + Z, Z)`.
    fn shifted(&self, v: &[f64], rho: f64) -> Result<f64> {
        match (&self.z, self.metric) {
            (_, Metric::Wasserstein { .. }) => Ok(rho * v.iter().map(|a| a * a).sum::<f64>().sqrt()),
            (LawDescriptor::Gaussian(z), Metric::Tv) => {
                let shift = DVector::from_column_slice(v) * rho;
                tv_gaussian(&z.affine(&shift, 1.0), z)
            }
            (LawDescriptor::Stable(z), Metric::Tv) => {
                let moved = StableLaw::new(z.alpha, z.scale_c, z.location + rho * v[0])?;
                stable_tv(&moved, z)
            }
            (LawDescriptor::Empirical { .. }, _) => Err(Error::UnsupportedCase("empirical limit law".into())),
        }
    }

    fn profile(&self, dec: &DominantDecomposition, v: &[f64], r: f64, w: f64) -> Result<f64> {
        match (&self.z, self.metric) {
            (_, Metric::Wasserstein { .. }) => Ok(profile_wp(dec.rate, dec.block_size, w, v, r)),
            (LawDescriptor::Gaussian(z), Metric::Tv) => profile_tv(dec.rate, dec.block_size, w, v, z, r),
            _ => self.shifted(v, profile_amplitude(dec, r, w)),
        }
    }

    fn monte_carlo(&self, samples: &[Vec<f64>], seed: u64) -> Result<(f64, f64)> {
        let p = match self.metric {
            Metric::Wasserstein { p } => p,
            Metric::Tv => return Err(Error::UnsupportedCase("total variation from samples".into())),
        };
        let LawDescriptor::Gaussian(z) = &self.z else {
            return Err(Error::UnsupportedCase("Monte Carlo against a non-Gaussian limit".into()));
        };
        if z.dim() == 1 {
            let xs: Vec<f64> = samples.iter().map(|s| s[0]).collect();
            let q = gaussian_quantile(z.mean[0], z.covariance[(0, 0)]);
            let n = xs.len() as f64;
            let table: Vec<f64> = (0..xs.len()).map(|i| q((i as f64 + 0.5) / n)).collect();
            let value = wp_sample_vs_table(&xs, &table, p);
            let se = bootstrap_stderr(&xs, BOOTSTRAP_RESAMPLES, seed, |b| wp_sample_vs_table(b, &table, p));
            return Ok((value, se));
        }
        let reference = sample_gaussian(z, samples.len(), mix_seed(seed, 0x5a, 0));
        let value = wp_empirical(samples, &reference, p)?;
        // Half-sample spread as the standard error.
        let half = samples.len() / 2;
        let a = wp_empirical(&samples[..half], &reference[..half], p)?;
        let b = wp_empirical(&samples[half..2 * half], &reference[half..2 * half], p)?;
        Ok((value, (a - b).abs() / 2.0))
    }
}

fn sample_gaussian(z: &GaussianLaw, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let root = sqrtm_psd(&z.covariance);
    (0..n)
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let e = DVector::from_fn(z.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            (&z.mean + &root * e).iter().copied().collect()
        })
        .collect()
}

fn schedule_for(s: &Scenario, epsilon: f64, w: f64) -> Result<(DominantDecomposition, CutoffSchedule)> {
    let dec = dominant_decomposition(&s.drift(), &s.initial())?;
    let sched = cutoff_time_scale(dec.rate, dec.block_size, &s.scale, epsilon, w)?;
    Ok((dec, sched))
}

/// Measured and theoretical distances along `t = t_cut + r·w`, one entry per
/// `r`; entries with `t ≤ 0` are `Err(NegativeTime)`.
fn curve_entries(
    s: &Scenario,
    epsilon: f64,
    r_grid: &[f64],
    w: f64,
) -> Result<(CutoffSchedule, Vec<Result<CurvePoint>>)> {
    let (dec, sched) = schedule_for(s, epsilon, w)?;
    let eval = Evaluator::new(s.metric, s.limit_law.clone())?;
    let entries = r_grid
        .par_iter()
        .enumerate()
        .map(|(k, &r)| {
            let t = sched.time_at(r);
            if t <= 0.0 {
                return Err(Error::NegativeTime { r, t });
            }
            // compare with the profile at the current phase of the orbit
            let theoretical = eval.profile(&dec, &dominant_trajectory(&dec, t), r, w)?;
            let (measured, stderr) = match s.evaluation {
                Evaluation::Exact => eval.exact(&marginal_law(s, epsilon, t)?)?,
                Evaluation::MonteCarlo { n } => {
                    let seed = mix_seed(s.seed, epsilon.to_bits(), k as u64);
                    let samples = marginal_samples(s, epsilon, t, n, seed)?;
                    eval.monte_carlo(&samples, seed)?
                }
            };
            Ok(CurvePoint { r, t: Some(t), measured: Some(measured), theoretical, stderr })
        })
        .collect();
    Ok((sched, entries))
}

/// `d(X^ε_{t_cut + rw}/(εσ), Z)` against the limiting profile.
pub fn distance_curve(s: &Scenario, epsilon: f64, r_grid: &[f64], w: f64) -> Result<ProfileCurve> {
    let (sched, entries) = curve_entries(s, epsilon, r_grid, w)?;
    let points = entries.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ProfileCurve { metric: s.metric, epsilon: Some(epsilon), schedule: Some(sched), points })
}

/// Point of `ω(x)` used for theory-only curves: the sample of median norm.
pub fn representative_mode(dec: &DominantDecomposition, resolution: usize) -> Result<Vec<f64>> {
    let omega = omega_limit_set(dec, resolution)?;
    let mut samples = omega.samples;
    samples.sort_by(|a, b| {
        let na: f64 = a.iter().map(|v| v * v).sum();
        let nb: f64 = b.iter().map(|v| v * v).sum();
        na.total_cmp(&nb)
    });
    Ok(samples.swap_remove(samples.len() / 2))
}

/// Limiting profile `r ↦ d(λ^{1-ℓ}e^{-λrw} v + Z, Z)` without simulation.
pub fn profile_curve(s: &Scenario, r_grid: &[f64], w: f64) -> Result<ProfileCurve> {
    let dec = dominant_decomposition(&s.drift(), &s.initial())?;
    let v = representative_mode(&dec, 64)?;
    let eval = Evaluator::new(s.metric, s.limit_law.clone())?;
    let points = r_grid
        .iter()
        .map(|&r| {
            Ok(CurvePoint { r, t: None, measured: None, theoretical: eval.profile(&dec, &v, r, w)?, stderr: 0.0 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProfileCurve { metric: s.metric, epsilon: None, schedule: None, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffKind {
    /// `d(ρv + Z, Z)` is the same for every `v ∈ ω(x)`: profile cut-off.
    Profile,
    /// The distance depends on the phase: window cut-off only.
    WindowOnly,
}

/// Lower and upper envelopes over `ω(x)` at one amplitude `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub rho: f64,
    pub lower: f64,
    pub upper: f64,
    pub argmin: Vec<f64>,
    pub argmax: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: CutoffKind,
    pub omega_kind: OmegaKind,
    pub spread: f64,
    pub tolerance: f64,
    pub envelopes: Vec<Envelope>,
}

/// Decides profile versus window cut-off from the spread of
/// `v ↦ d(ρv + Z, Z)` over samples of `ω(x)`.
pub fn cutoff_classification(s: &Scenario, rho_grid: &[f64], tol: f64, resolution: usize) -> Result<Classification> {
    if rho_grid.is_empty() {
        return Err(Error::InvalidArgument("empty ρ grid".into()));
    }
    let dec = dominant_decomposition(&s.drift(), &s.initial())?;
    let omega = omega_limit_set(&dec, resolution)?;
    let eval = Evaluator::new(s.metric, s.limit_law.clone())?;
    let mut envelopes = Vec::with_capacity(rho_grid.len());
    for &rho in rho_grid {
        let mut lo = (f64::INFINITY, 0);
        let mut hi = (f64::NEG_INFINITY, 0);
        for (i, v) in omega.samples.iter().enumerate() {
            let d = eval.shifted(v, rho)?;
            if d < lo.0 {
                lo = (d, i);
            }
            if d > hi.0 {
                hi = (d, i);
            }
        }
        envelopes.push(Envelope {
            rho,
            lower: lo.0,
            upper: hi.0,
            argmin: omega.samples[lo.1].clone(),
            argmax: omega.samples[hi.1].clone(),
        });
    }
    let spread = envelopes.iter().map(|e| e.upper - e.lower).fold(0.0, f64::max);
    let kind = if spread <= tol { CutoffKind::Profile } else { CutoffKind::WindowOnly };
    Ok(Classification { kind, omega_kind: omega.kind, spread, tolerance: tol, envelopes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub epsilon: f64,
    /// `sup_r |measured - theoretical|` over the admissible `r`.
    pub sup_gap: Option<f64>,
    pub stderr: f64,
    /// `r` values skipped because `t_cut + r·w ≤ 0`.
    pub negative_time: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub scenario: String,
    pub classification: Classification,
    pub gaps: Vec<GapEntry>,
    /// Sup-gaps decrease along the ε list (within three combined standard
    /// errors for Monte Carlo evaluations).
    pub monotone: bool,
}

/// Default spread tolerance for classification.
pub const CLASSIFICATION_TOL: f64 = 1e-3;

/// Sup-gap per ε plus the profile/window classification.
pub fn convergence_report(s: &Scenario, eps_list: &[f64], r_grid: &[f64], w: f64) -> Result<CutoffReport> {
    if eps_list.is_empty() || r_grid.is_empty() {
        return Err(Error::InvalidArgument("need at least one ε and one r".into()));
    }
    let dec = dominant_decomposition(&s.drift(), &s.initial())?;
    let rhos: Vec<f64> = r_grid.iter().map(|&r| profile_amplitude(&dec, r, w)).collect();
    let classification = cutoff_classification(s, &rhos, CLASSIFICATION_TOL, 64)?;
    let mut gaps = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let (_, entries) = curve_entries(s, eps, r_grid, w)?;
        let mut negative_time = Vec::new();
        let mut points = Vec::new();
        for e in entries {
            match e {
                Ok(p) => points.push(p),
                Err(Error::NegativeTime { r, .. }) => negative_time.push(r),
                Err(other) => return Err(other),
            }
        }
        let curve = ProfileCurve { metric: s.metric, epsilon: Some(eps), schedule: None, points };
        let (sup_gap, stderr) = match curve.sup_gap() {
            Some((g, se)) => (Some(g), se),
            None => (None, 0.0),
        };
        gaps.push(GapEntry { epsilon: eps, sup_gap, stderr, negative_time });
    }
    let monte_carlo = matches!(s.evaluation, Evaluation::MonteCarlo { .. });
    let monotone = gaps_decrease(&gaps, monte_carlo);
    Ok(CutoffReport { scenario: s.name.clone(), classification, gaps, monotone })
}

/// Whether sup-gaps shrink along the list, skipping flagged entries.
pub fn gaps_decrease(gaps: &[GapEntry], monte_carlo: bool) -> bool {
    let seq: Vec<(f64, f64)> = gaps.iter().filter_map(|g| g.sup_gap.map(|v| (v, g.stderr))).collect();
    seq.windows(2).all(|w| {
        let (a, sa) = w[0];
        let (b, sb) = w[1];
        if monte_carlo {
            b <= a + 3.0 * (sa * sa + sb * sb).sqrt()
        } else {
            b <= a * (1.0 + 1e-9) + 1e-15
        }
    })
}

/// Result of a slow-variation check on `σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaramataCheck {
    pub pass: bool,
    pub t_max: f64,
    /// `(r, σ(t_max)/σ(t_max + r), σ(t_max)/σ(t_max - r))`.
    pub ratios: Vec<(f64, f64, f64)>,
    /// `d/dt ln σ` estimated over `[t_max/2, t_max]`.
    pub log_growth: f64,
}

/// Tolerance on `|σ(t)/σ(t ± r) - 1|`.
pub const KARAMATA_TOL: f64 = 1e-3;
/// `σ_t e^{-ct} → 0` is checked with this `c`.
pub const KARAMATA_RATE: f64 = 1e-2;

/// Two-sided ratios `σ(t)/σ(t ± r)` near 1 and sub-exponential growth at
/// `t_max`. Ratios use log-space evaluation so that `σ` itself may overflow.
pub fn karamata_check(sigma: &ScaleFunction, r_list: &[f64], t_max: f64) -> Result<KaramataCheck> {
    sigma.validate()?;
    if r_list.is_empty() || r_list.iter().any(|r| !r.is_finite() || r.abs() >= t_max) {
        return Err(Error::InvalidArgument("need finite r with |r| < t_max".into()));
    }
    let ln_t = sigma.ln_eval(t_max);
    let ratios: Vec<(f64, f64, f64)> = r_list
        .iter()
        .map(|&r| {
            let up = (ln_t - sigma.ln_eval(t_max + r.abs())).exp();
            let down = (ln_t - sigma.ln_eval(t_max - r.abs())).exp();
            (r, up, down)
        })
        .collect();
    let log_growth = (ln_t - sigma.ln_eval(0.5 * t_max)) / (0.5 * t_max);
    let close = ratios.iter().all(|&(_, a, b)| (a - 1.0).abs() <= KARAMATA_TOL && (b - 1.0).abs() <= KARAMATA_TOL);
    let pass = close && log_growth < KARAMATA_RATE && ratios.iter().all(|&(_, a, b)| a.is_finite() && b.is_finite());
    Ok(KaramataCheck { pass, t_max, ratios, log_growth })
}
