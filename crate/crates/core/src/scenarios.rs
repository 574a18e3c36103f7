//! Catalog of process families and the scenario configuration format.
//!
//! A scenario file is JSON:
//!
//! ```json
//! {
//!   "family": "fou_1d",
//!   "params": { "lambda": 1.0, "hurst": 0.7, "x": 1.0 },
//!   "metric": { "kind": "tv" },
//!   "evaluation": { "kind": "exact" },
//!   "seed": 12648430
//! }
//! ```
//!
//! Matrices are given inline as arrays of rows or as `{"csv": "file.csv"}`,
//! resolved relative to the scenario file.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{expm, parse_matrix_csv, solve_lyapunov, sqrtm_psd, symmetrize};
use crate::metrics::{GaussianLaw, LawDescriptor, StableLaw};
use crate::simulate::{
    fou_convolution_variance, fou_path, fou_stationary_covariance, fou_stationary_variance, inhomogeneous_variance,
    integrated_ou_law, iterated_ou_limit_covariance, path_rng, CovarianceKernel, FgnSampler, IntegratedDriver,
    ScaleFunction, TimeGrid,
};
use crate::spectral::{validate_stability, StableMatrix};
use crate::{Error, Result};

/// Default seed, `0xC0FFEE`.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixParam {
    Rows(Vec<Vec<f64>>),
    Csv { csv: String },
}

impl MatrixParam {
    pub fn resolve(&self, base: Option<&Path>) -> Result<DMatrix<f64>> {
        match self {
            MatrixParam::Rows(rows) => crate::linalg::from_rows(rows),
            MatrixParam::Csv { csv } => {
                let path = match base {
                    Some(b) => b.join(csv),
                    None => csv.into(),
                };
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                parse_matrix_csv(&text)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// `dX = -ΛX dt + ε Q^{1/2} dB`: Brownian noise with diffusion matrix `Q`.
    Diffusion { matrix: MatrixParam },
    /// `S_t ~ N(0, C)` for every `t > 0`.
    StationaryCovariance { matrix: MatrixParam },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GouDriver {
    Brownian {
        #[serde(default)]
        diffusion: Option<MatrixParam>,
    },
    /// Independent fractional Brownian coordinates; needs a diagonal drift.
    Fbm { hurst: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauSpec {
    Constant {
        value: f64,
    },
    /// `τ(s) = base + amplitude·e^{-rate·s}`, so `τ(∞) = base`.
    Decaying {
        base: f64,
        amplitude: f64,
        rate: f64,
    },
}

impl TauSpec {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            TauSpec::Constant { value } => value,
            TauSpec::Decaying { base, amplitude, rate } => base + amplitude * (-rate * s).exp(),
        }
    }

    pub fn limit(&self) -> f64 {
        match *self {
            TauSpec::Constant { value } => value,
            TauSpec::Decaying { base, .. } => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(u64),
    Many(Vec<u64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<u64> {
        match self {
            OneOrMany::One(n) => vec![*n],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn default_half() -> f64 {
    0.5
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Family {
    #[serde(rename = "fou_1d")]
    Fou1d {
        lambda: f64,
        hurst: f64,
        x: f64,
    },
    MultivariateGaussianLinear {
        drift: MatrixParam,
        x: Vec<f64>,
        noise: NoiseSpec,
    },
    Averaging {
        lambda: f64,
        #[serde(default = "default_half")]
        hurst: f64,
        x: f64,
        n: OneOrMany,
    },
    GeneralizedOu {
        drift: MatrixParam,
        x: Vec<f64>,
        driver: GouDriver,
    },
    IteratedOu {
        drift: MatrixParam,
        x: Vec<f64>,
        kernel: CovarianceKernel,
        #[serde(default)]
        factor: Option<MatrixParam>,
        #[serde(default)]
        horizon: Option<f64>,
    },
    Inhomogeneous {
        lambda: f64,
        x: f64,
        tau: TauSpec,
    },
    IntegratedOuGaussian {
        lambda: f64,
        x: f64,
        #[serde(default)]
        y: f64,
    },
    IntegratedOuStable {
        lambda: f64,
        x: f64,
        #[serde(default)]
        y: f64,
        alpha: f64,
        #[serde(default = "default_one")]
        c_alpha: f64,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Fou1d { .. } => "fou_1d",
            Family::MultivariateGaussianLinear { .. } => "multivariate_gaussian_linear",
            Family::Averaging { .. } => "averaging",
            Family::GeneralizedOu { .. } => "generalized_ou",
            Family::IteratedOu { .. } => "iterated_ou",
            Family::Inhomogeneous { .. } => "inhomogeneous",
            Family::IntegratedOuGaussian { .. } => "integrated_ou_gaussian",
            Family::IntegratedOuStable { .. } => "integrated_ou_stable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    Tv,
    Wasserstein { p: f64 },
}

impl Metric {
    pub fn tag(&self) -> String {
        match self {
            Metric::Tv => "tv".into(),
            Metric::Wasserstein { p } => format!("w{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evaluation {
    Exact,
    MonteCarlo { n: usize },
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// Raw scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub family: Family,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default = "default_evaluation")]
    pub evaluation: Evaluation,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub window: f64,
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
}

fn default_metric() -> Metric {
    Metric::Tv
}

fn default_evaluation() -> Evaluation {
    Evaluation::Exact
}

/// Family data after matrices are resolved and derived quantities computed.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Fou { lambda: f64, hurst: f64, x: f64 },
    Linear { drift: StableMatrix, x: Vec<f64>, noise: LinearNoise },
    GeneralizedFbm { drift: StableMatrix, x: Vec<f64>, hurst: f64 },
    Iterated { drift: StableMatrix, x: Vec<f64>, kernel: CovarianceKernel, factor: DMatrix<f64>, sigma: DMatrix<f64> },
    Inhomogeneous { lambda: f64, x: f64, tau: TauSpec },
    IntegratedGaussian { lambda: f64, x: f64 },
    IntegratedStable { lambda: f64, x: f64, alpha: f64, c_alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinearNoise {
    /// Brownian noise: `Var(S_t) = Σ∞ - e^{-Λt} Σ∞ e^{-Λ*t}`.
    Diffusion {
        q: DMatrix<f64>,
        stationary: DMatrix<f64>,
    },
    Stationary {
        c: DMatrix<f64>,
    },
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub family: Family,
    pub model: Model,
    pub scale: ScaleFunction,
    pub limit_law: LawDescriptor,
    pub metric: Metric,
    pub evaluation: Evaluation,
    pub seed: u64,
    pub window: f64,
    pub epsilons: Vec<f64>,
}

fn admissible(cond: bool, name: &str, reason: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InadmissibleRange { name: name.into(), reason: reason.into() })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    admissible(lambda > 0.0 && lambda.is_finite(), "lambda", format!("{lambda} must be positive"))
}

fn check_hurst(h: f64) -> Result<()> {
    admissible(h > 0.0 && h < 1.0, "hurst", format!("{h} not in (0,1)"))
}

fn check_x(x: &[f64]) -> Result<()> {
    admissible(x.iter().any(|v| *v != 0.0), "x", "initial datum must be nonzero")
}

fn scalar_drift(lambda: f64) -> StableMatrix {
    StableMatrix { dim: 1, entries: DMatrix::from_element(1, 1, lambda), spectral_margin: lambda }
}

fn check_square(name: &str, m: &DMatrix<f64>, dim: usize) -> Result<()> {
    admissible(
        m.nrows() == dim && m.ncols() == dim,
        name,
        format!("expected {dim}x{dim}, got {}x{}", m.nrows(), m.ncols()),
    )
}

fn check_psd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    GaussianLaw::new(DVector::zeros(m.nrows()), m.clone())
        .map(|_| ())
        .map_err(|e| Error::InadmissibleRange { name: name.into(), reason: e.to_string() })
}

const DEFAULT_EPSILONS: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

/// Validates a configuration and attaches `σ_t` and the limit law `Z`.
pub fn build_scenario(config: &ScenarioConfig, base: Option<&Path>) -> Result<Scenario> {
    admissible(config.window > 0.0, "window", format!("{} must be positive", config.window))?;
    let mut epsilons = config.epsilons.clone().unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
    let (model, scale) = match &config.family {
        Family::Fou1d { lambda, hurst, x } => {
            check_lambda(*lambda)?;
            check_hurst(*hurst)?;
            check_x(&[*x])?;
            (Model::Fou { lambda: *lambda, hurst: *hurst, x: *x }, ScaleFunction::One)
        }
        Family::Averaging { lambda, hurst, x, n } => {
            check_lambda(*lambda)?;
            check_hurst(*hurst)?;
            check_x(&[*x])?;
            let ns = n.values();
            admissible(!ns.is_empty() && ns.iter().all(|&k| k >= 1), "n", "need N ≥ 1")?;
            epsilons = ns.iter().map(|&k| 1.0 / (k as f64).sqrt()).collect();
            (Model::Fou { lambda: *lambda, hurst: *hurst, x: *x }, ScaleFunction::One)
        }
        Family::MultivariateGaussianLinear { drift, x, noise } => {
            let drift = validate_stability(&drift.resolve(base)?)?;
            admissible(x.len() == drift.dim, "x", format!("length {} vs drift dim {}", x.len(), drift.dim))?;
            check_x(x)?;
            let noise = match noise {
                NoiseSpec::Diffusion { matrix } => {
                    let q = matrix.resolve(base)?;
                    check_square("noise.matrix", &q, drift.dim)?;
                    check_psd("noise.matrix", &q)?;
                    let stationary = solve_lyapunov(&drift.entries, &q)?;
                    LinearNoise::Diffusion { q, stationary }
                }
                NoiseSpec::StationaryCovariance { matrix } => {
                    let c = matrix.resolve(base)?;
                    check_square("noise.matrix", &c, drift.dim)?;
                    check_psd("noise.matrix", &c)?;
                    LinearNoise::Stationary { c }
                }
            };
            (Model::Linear { drift, x: x.clone(), noise }, ScaleFunction::One)
        }
        Family::GeneralizedOu { drift, x, driver } => {
            let drift = validate_stability(&drift.resolve(base)?)?;
            admissible(x.len() == drift.dim, "x", format!("length {} vs drift dim {}", x.len(), drift.dim))?;
            check_x(x)?;
            let model = match driver {
                GouDriver::Brownian { diffusion } => {
                    let q = match diffusion {
                        Some(m) => m.resolve(base)?,
                        None => DMatrix::identity(drift.dim, drift.dim),
                    };
                    check_square("driver.diffusion", &q, drift.dim)?;
                    check_psd("driver.diffusion", &q)?;
                    let stationary = solve_lyapunov(&drift.entries, &q)?;
                    Model::Linear { drift, x: x.clone(), noise: LinearNoise::Diffusion { q, stationary } }
                }
                GouDriver::Fbm { hurst } => {
                    check_hurst(*hurst)?;
                    let off_diag = drift.entries.iter().enumerate().any(|(k, v)| k % (drift.dim + 1) != 0 && *v != 0.0);
                    admissible(!off_diag, "drift", "fractional drivers need a diagonal drift")?;
                    Model::GeneralizedFbm { drift, x: x.clone(), hurst: *hurst }
                }
            };
            (model, ScaleFunction::One)
        }
        Family::IteratedOu { drift, x, kernel, factor, horizon } => {
            let drift = validate_stability(&drift.resolve(base)?)?;
            admissible(x.len() == drift.dim, "x", format!("length {} vs drift dim {}", x.len(), drift.dim))?;
            check_x(x)?;
            match *kernel {
                CovarianceKernel::Exponential { theta, variance } => {
                    admissible(theta > 0.0, "kernel.theta", format!("{theta} must be positive"))?;
                    admissible(variance > 0.0, "kernel.variance", format!("{variance} must be positive"))?;
                }
                CovarianceKernel::FractionalOu { lambda, hurst } => {
                    check_lambda(lambda)?;
                    check_hurst(hurst)?;
                }
            }
            let factor = match factor {
                Some(m) => m.resolve(base)?,
                None => DMatrix::identity(drift.dim, drift.dim),
            };
            check_square("factor", &factor, drift.dim)?;
            check_psd("factor", &factor)?;
            let horizon = horizon.unwrap_or(40.0 / drift.spectral_margin);
            let r_d = kernel_matrix(kernel, &factor);
            let (sigma, _) = iterated_ou_limit_covariance(&drift, &r_d, horizon, 1e-6)?;
            (Model::Iterated { drift, x: x.clone(), kernel: kernel.clone(), factor, sigma }, ScaleFunction::One)
        }
        Family::Inhomogeneous { lambda, x, tau } => {
            check_lambda(*lambda)?;
            check_x(&[*x])?;
            admissible(tau.limit() > 0.0, "tau", "τ(∞) must be positive")?;
            if let TauSpec::Decaying { rate, .. } = tau {
                admissible(*rate > 0.0, "tau.rate", format!("{rate} must be positive"))?;
            }
            (Model::Inhomogeneous { lambda: *lambda, x: *x, tau: tau.clone() }, ScaleFunction::One)
        }
        Family::IntegratedOuGaussian { lambda, x, .. } => {
            check_lambda(*lambda)?;
            check_x(&[*x])?;
            (Model::IntegratedGaussian { lambda: *lambda, x: *x }, ScaleFunction::Sqrt)
        }
        Family::IntegratedOuStable { lambda, x, alpha, c_alpha, .. } => {
            check_lambda(*lambda)?;
            check_x(&[*x])?;
            admissible(*alpha > 1.0 && *alpha < 2.0, "alpha", format!("{alpha} not in (1,2)"))?;
            admissible(*c_alpha > 0.0, "c_alpha", format!("{c_alpha} must be positive"))?;
            (
                Model::IntegratedStable { lambda: *lambda, x: *x, alpha: *alpha, c_alpha: *c_alpha },
                ScaleFunction::Power { exponent: 1.0 / alpha },
            )
        }
    };
    for &e in &epsilons {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::InvalidEpsilon(e));
        }
    }
    match (config.metric, &model) {
        (Metric::Wasserstein { p }, _) if !(p >= 1.0) => {
            return Err(Error::InadmissibleRange { name: "metric.p".into(), reason: format!("{p} must be at least 1") })
        }
        (Metric::Wasserstein { p }, Model::IntegratedStable { alpha, .. }) if p >= *alpha => {
            return Err(Error::MomentViolation { p, alpha: *alpha })
        }
        _ => {}
    }
    if let Evaluation::MonteCarlo { n } = config.evaluation {
        admissible(n >= 2, "evaluation.n", "need at least two paths")?;
        admissible(config.metric != Metric::Tv, "metric", "total variation needs exact laws; use exact evaluation")?;
        let supported = matches!(model, Model::Fou { .. } | Model::Linear { noise: LinearNoise::Diffusion { .. }, .. });
        admissible(supported, "evaluation", format!("no path simulator for family {}", config.family.name()))?;
    }
    let mut scenario = Scenario {
        name: config.name.clone().unwrap_or_else(|| config.family.name().to_string()),
        family: config.family.clone(),
        model,
        scale,
        limit_law: LawDescriptor::Empirical { samples: Vec::new() },
        metric: config.metric,
        evaluation: config.evaluation,
        seed: config.seed,
        window: config.window,
        epsilons,
    };
    scenario.limit_law = scenario_limit_law(&scenario)?;
    Ok(scenario)
}

/// `R_D(s) = k(s)·C`.
pub fn kernel_matrix(kernel: &CovarianceKernel, factor: &DMatrix<f64>) -> impl Fn(f64) -> DMatrix<f64> {
    let kernel = kernel.clone();
    let factor = factor.clone();
    move |s| factor.clone() * kernel.eval(s).unwrap_or(f64::NAN)
}

/// The limit law `Z` of the renormalized process.
pub fn scenario_limit_law(s: &Scenario) -> Result<LawDescriptor> {
    let gauss =
        |cov: DMatrix<f64>| LawDescriptor::Gaussian(GaussianLaw { mean: DVector::zeros(cov.nrows()), covariance: cov });
    Ok(match &s.model {
        Model::Fou { lambda, hurst, .. } => {
            gauss(DMatrix::from_element(1, 1, fou_stationary_variance(*lambda, *hurst)))
        }
        Model::Linear { noise: LinearNoise::Diffusion { stationary, .. }, .. } => gauss(stationary.clone()),
        Model::Linear { noise: LinearNoise::Stationary { c }, .. } => gauss(c.clone()),
        Model::GeneralizedFbm { drift, hurst, .. } => gauss(DMatrix::from_fn(drift.dim, drift.dim, |i, j| {
            if i == j {
                fou_stationary_variance(drift.entries[(i, i)], *hurst)
            } else {
                0.0
            }
        })),
        Model::Iterated { sigma, .. } => gauss(sigma.clone()),
        Model::Inhomogeneous { lambda, tau, .. } => {
            gauss(DMatrix::from_element(1, 1, tau.limit().powi(2) / (2.0 * lambda)))
        }
        Model::IntegratedGaussian { lambda, .. } => gauss(DMatrix::from_element(1, 1, 1.0 / (lambda * lambda))),
        Model::IntegratedStable { lambda, alpha, c_alpha, .. } => {
            LawDescriptor::Stable(StableLaw::new(*alpha, c_alpha / lambda.powf(*alpha), 0.0)?)
        }
    })
}

impl Scenario {
    /// Drift whose dominant data drive the cut-off.
    pub fn drift(&self) -> StableMatrix {
        match &self.model {
            Model::Fou { lambda, .. }
            | Model::Inhomogeneous { lambda, .. }
            | Model::IntegratedGaussian { lambda, .. }
            | Model::IntegratedStable { lambda, .. } => scalar_drift(*lambda),
            Model::Linear { drift, .. } | Model::GeneralizedFbm { drift, .. } | Model::Iterated { drift, .. } => {
                drift.clone()
            }
        }
    }

    /// Initial datum of the decaying mean; `-x/λ` for the integrated families.
    pub fn initial(&self) -> Vec<f64> {
        match &self.model {
            Model::Fou { x, .. } | Model::Inhomogeneous { x, .. } => vec![*x],
            Model::IntegratedGaussian { lambda, x } | Model::IntegratedStable { lambda, x, .. } => vec![-x / lambda],
            Model::Linear { x, .. } | Model::GeneralizedFbm { x, .. } | Model::Iterated { x, .. } => x.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.initial().len()
    }

    /// `N` values for the averaging family, matching `epsilons`.
    pub fn averaging_sizes(&self) -> Option<Vec<u64>> {
        match &self.family {
            Family::Averaging { n, .. } => Some(n.values()),
            _ => None,
        }
    }
}

fn var_linear(drift: &StableMatrix, noise: &LinearNoise, t: f64) -> DMatrix<f64> {
    match noise {
        LinearNoise::Stationary { c } => {
            if t == 0.0 {
                DMatrix::zeros(c.nrows(), c.ncols())
            } else {
                c.clone()
            }
        }
        LinearNoise::Diffusion { stationary, .. } => {
            let e = expm(&(&drift.entries * (-t)));
            symmetrize(&(stationary - &e * stationary * e.transpose()))
        }
    }
}

/// Covariance of `S_t = D_t - e^{-Λt}D_0 - ∫_0^t Λe^{-Λu} D_{t-u} du` for a
/// stationary driver with covariance `R_D`, by quadrature on `[0, t]`.
pub fn iterated_ou_variance(drift: &StableMatrix, r_d: &dyn Fn(f64) -> DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let m = drift.dim;
    if t == 0.0 {
        return Ok(DMatrix::zeros(m, m));
    }
    let lam = &drift.entries;
    let lam_t = lam.transpose();
    let e_t = expm(&(lam * (-t)));
    let flat = |mat: DMatrix<f64>, out: &mut [f64]| out.copy_from_slice(mat.as_slice());
    let tol = 1e-12;
    // Cov(D_t, C) and Cov(e^{-Λt}D_0, C) share the integrand shape.
    let (ac, _) = crate::quad::integrate_vec(
        |u, out| flat(r_d(u) * expm(&(&lam_t * (-u))) * &lam_t, out),
        m * m,
        0.0,
        t,
        tol,
        1e-12,
    )?;
    let (bc, _) = crate::quad::integrate_vec(
        |u, out| flat(r_d(t - u).transpose() * expm(&(&lam_t * (-u))) * &lam_t, out),
        m * m,
        0.0,
        t,
        tol,
        1e-12,
    )?;
    let ac = DMatrix::from_column_slice(m, m, &ac);
    let bc = &e_t * DMatrix::from_column_slice(m, m, &bc);
    let (cc, _) = crate::quad::integrate_vec(
        |a, out| {
            let f = |b: f64, o: &mut [f64]| o.copy_from_slice((r_d(b - a) * expm(&(&lam_t * (-b)))).as_slice());
            let lo = crate::quad::integrate_vec(f, m * m, 0.0, a, tol, 1e-12)
                .map(|r| r.0)
                .unwrap_or_else(|_| vec![f64::NAN; m * m]);
            let hi = crate::quad::integrate_vec(f, m * m, a, t, tol, 1e-12)
                .map(|r| r.0)
                .unwrap_or_else(|_| vec![f64::NAN; m * m]);
            let sum: Vec<f64> = lo.iter().zip(&hi).map(|(p, q)| p + q).collect();
            flat(lam * expm(&(lam * (-a))) * DMatrix::from_column_slice(m, m, &sum) * &lam_t, out)
        },
        m * m,
        0.0,
        t,
        tol,
        1e-12,
    )?;
    let cc = DMatrix::from_column_slice(m, m, &cc);
    if cc.iter().any(|v| !v.is_finite()) {
        return Err(Error::QuadratureFailure { tol, estimate: f64::NAN });
    }
    let r0 = r_d(0.0);
    let rt = r_d(t);
    let var = &r0 + &e_t * &r0 * e_t.transpose() - &rt * e_t.transpose() - &e_t * rt.transpose() - &ac - ac.transpose()
        + &bc
        + bc.transpose()
        + cc;
    Ok(symmetrize(&var))
}

/// Stationary covariance `E[U_t U_0^*]` of a diagonal fractional OU vector.
fn fbm_stationary_cov(drift: &StableMatrix, hurst: f64, t: f64) -> Result<DMatrix<f64>> {
    let m = drift.dim;
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        out[(i, i)] = fou_stationary_covariance(drift.entries[(i, i)], hurst, t)?;
    }
    Ok(out)
}

/// Exact law of the renormalized state `X^ε_t(x) / (ε σ_t)` (for the
/// integrated families, of `(Y^ε_t - y - x/λ)/(ε σ_t)`). At `t = 0` this is
/// a point mass, returned as a zero-variance Gaussian.
pub fn marginal_law(s: &Scenario, epsilon: f64, t: f64) -> Result<LawDescriptor> {
    if t < 0.0 {
        return Err(Error::NegativeTime { r: f64::NAN, t });
    }
    let gauss = |mean: DVector<f64>, cov: DMatrix<f64>| LawDescriptor::Gaussian(GaussianLaw { mean, covariance: cov });
    let scalar = |mean: f64, var: f64| LawDescriptor::Gaussian(GaussianLaw::scalar(mean, var));
    Ok(match &s.model {
        Model::Fou { lambda, hurst, x } => {
            let var = if t == 0.0 { 0.0 } else { fou_convolution_variance(*lambda, *hurst, t)? };
            scalar((-lambda * t).exp() * x / epsilon, var)
        }
        Model::Linear { drift, x, noise } => {
            let mean = expm(&(&drift.entries * (-t))) * DVector::from_column_slice(x) / epsilon;
            gauss(mean, var_linear(drift, noise, t))
        }
        Model::GeneralizedFbm { drift, x, hurst } => {
            // S_t = U_t - e^{-Λt}U_0:
            // Var = R(0) + E R(0) E* - R(t) E* - E R(t)*, R(t) = E[U_t U_0*]
            let e = expm(&(&drift.entries * (-t)));
            let mean = &e * DVector::from_column_slice(x) / epsilon;
            let r0 = fbm_stationary_cov(drift, *hurst, 0.0)?;
            let rt = fbm_stationary_cov(drift, *hurst, t)?;
            let var = &r0 + &e * &r0 * e.transpose() - &rt * e.transpose() - &e * rt.transpose();
            gauss(mean, symmetrize(&var))
        }
        Model::Iterated { drift, x, kernel, factor, .. } => {
            let mean = expm(&(&drift.entries * (-t))) * DVector::from_column_slice(x) / epsilon;
            let r_d = kernel_matrix(kernel, factor);
            gauss(mean, iterated_ou_variance(drift, &r_d, t)?)
        }
        Model::Inhomogeneous { lambda, x, tau } => {
            let (var, _) = inhomogeneous_variance(*lambda, &|u| tau.eval(u), tau.limit(), t)?;
            scalar((-lambda * t).exp() * x / epsilon, var)
        }
        Model::IntegratedGaussian { lambda, x } => {
            if t == 0.0 {
                return Ok(scalar(-x / (lambda * epsilon), 0.0));
            }
            match integrated_ou_law(*lambda, epsilon, *x, t, IntegratedDriver::Gaussian)? {
                LawDescriptor::Gaussian(g) => LawDescriptor::Gaussian(g.affine(&DVector::zeros(1), 1.0 / epsilon)),
                other => other,
            }
        }
        Model::IntegratedStable { lambda, x, alpha, c_alpha } => {
            if t == 0.0 {
                return Err(Error::NoExactLaw("stable marginal at t = 0 is a point mass".into()));
            }
            match integrated_ou_law(
                *lambda,
                epsilon,
                *x,
                t,
                IntegratedDriver::Stable { alpha: *alpha, c_alpha: *c_alpha },
            )? {
                LawDescriptor::Stable(st) => {
                    // dividing by ε multiplies the dispersion by 1/ε
                    LawDescriptor::Stable(StableLaw::new(
                        st.alpha,
                        st.scale_c / epsilon.powf(*alpha),
                        st.location / epsilon,
                    )?)
                }
                other => other,
            }
        }
    })
}

/// Grid step used by path simulators.
pub const MC_STEP: f64 = 0.01;

/// `n` independent draws of the renormalized state at time `t` from the path
/// simulator, one ChaCha stream per path.
pub fn marginal_samples(s: &Scenario, epsilon: f64, t: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(t > 0.0) {
        return Err(Error::NegativeTime { r: f64::NAN, t });
    }
    let grid = TimeGrid::covering(t, MC_STEP)?;
    match &s.model {
        Model::Fou { lambda, hurst, x } => {
            let cache = if *hurst == 0.5 { None } else { Some(FgnSampler::new(*hurst, grid)?) };
            (0..n)
                .into_par_iter()
                .map(|p| {
                    let mut rng = path_rng(seed, p as u64);
                    let path = fou_path(*lambda, *hurst, epsilon, *x, &grid, cache.as_ref(), &mut rng)?;
                    Ok(vec![path[grid.len - 1] / epsilon])
                })
                .collect()
        }
        Model::Linear { drift, x, noise: LinearNoise::Diffusion { stationary, .. } } => {
            // exact AR(1) transition over one grid step
            let m = drift.dim;
            let eh = expm(&(&drift.entries * (-grid.step)));
            let step_cov = symmetrize(&(stationary - &eh * stationary * eh.transpose()));
            let root = sqrtm_psd(&step_cov);
            let decay = expm(&(&drift.entries * (-t))) * DVector::from_column_slice(x) / epsilon;
            Ok((0..n)
                .into_par_iter()
                .map(|p| {
                    let mut rng = path_rng(seed, p as u64);
                    let mut state = DVector::<f64>::zeros(m);
                    for _ in 1..grid.len {
                        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
                        state = &eh * state + &root * z;
                    }
                    (state + &decay).iter().copied().collect()
                })
                .collect())
        }
        _ => Err(Error::UnsupportedCase(format!("no path simulator for family {}", s.family.name()))),
    }
}

/// Error with the 1-based line and column it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub source: Option<Error>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Position of the first `"key"` occurrence, 1-based.
fn locate_key(text: &str, key: &str) -> Option<(usize, usize)> {
    let needle = format!("\"{key}\"");
    text.lines().enumerate().find_map(|(i, line)| line.find(&needle).map(|c| (i + 1, c + 1)))
}

fn error_key(err: &Error) -> Option<String> {
    match err {
        Error::InadmissibleRange { name, .. } => Some(name.rsplit('.').next().unwrap_or(name).to_string()),
        Error::MissingParameter(name) => Some(name.clone()),
        Error::MomentViolation { .. } => Some("p".into()),
        Error::InvalidEpsilon(_) => Some("epsilons".into()),
        Error::NotStable { .. } | Error::InvalidMatrix(_) => Some("drift".into()),
        _ => None,
    }
}

/// Parses and validates a scenario file's text.
pub fn parse_scenario(text: &str, base: Option<&Path>) -> std::result::Result<Scenario, ConfigError> {
    let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let message = match msg.find(" at line ") {
            Some(k) => msg[..k].to_string(),
            None => msg,
        };
        let source = message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
            .map(|f| Error::MissingParameter(f.to_string()));
        ConfigError { line: e.line(), column: e.column(), message, source }
    })?;
    build_scenario(&config, base).map_err(|err| {
        let (line, column) = error_key(&err).and_then(|k| locate_key(text, &k)).unwrap_or((1, 1));
        ConfigError { line, column, message: err.to_string(), source: Some(err) }
    })
}

pub fn load_scenario(path: &Path) -> std::result::Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: 0,
        column: 0,
        message: format!("{}: {e}", path.display()),
        source: Some(Error::Io(e.to_string())),
    })?;
    parse_scenario(&text, path.parent())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn parse(text: &str) -> Scenario {
        parse_scenario(text, None).unwrap()
    }

    #[test]
    fn fou_scenario() {
        let s = parse(r#"{"family":"fou_1d","params":{"lambda":1,"hurst":0.7,"x":1}}"#);
        assert_eq!(s.scale, ScaleFunction::One);
        assert_eq!(s.seed, DEFAULT_SEED);
        match &s.limit_law {
            LawDescriptor::Gaussian(g) => {
                assert_abs_diff_eq!(g.covariance[(0, 0)], fou_stationary_variance(1.0, 0.7), epsilon = 1e-15)
            }
            _ => panic!(),
        }
        let s = parse(r#"{"family":"fou_1d","params":{"lambda":1,"hurst":0.5,"x":1}}"#);
        match marginal_law(&s, 0.1, 2.0).unwrap() {
            LawDescriptor::Gaussian(g) => {
                assert_abs_diff_eq!(g.mean[0], (-2.0f64).exp() / 0.1, epsilon = 1e-13);
                assert_abs_diff_eq!(g.covariance[(0, 0)], (1.0 - (-4.0f64).exp()) / 2.0, epsilon = 1e-15);
            }
            _ => panic!(),
        }
        match marginal_law(&s, 0.1, 0.0).unwrap() {
            LawDescriptor::Gaussian(g) => assert_eq!((g.mean[0], g.covariance[(0, 0)]), (10.0, 0.0)),
            _ => panic!(),
        }
    }

    #[test]
    fn scales_follow_family() {
        let s = parse(r#"{"family":"integrated_ou_gaussian","params":{"lambda":1,"x":1,"y":0}}"#);
        assert_eq!(s.scale, ScaleFunction::Sqrt);
        assert_eq!(s.initial(), vec![-1.0]);
        match marginal_law(&s, 1.0, 1.0).unwrap() {
            LawDescriptor::Gaussian(g) => assert_abs_diff_eq!(g.covariance[(0, 0)], 0.168_091_3, epsilon = 1e-7),
            _ => panic!(),
        }
        let s = parse(r#"{"family":"integrated_ou_stable","params":{"lambda":1,"x":1,"alpha":1.5}}"#);
        assert_eq!(s.scale, ScaleFunction::Power { exponent: 1.0 / 1.5 });
        match s.limit_law {
            LawDescriptor::Stable(st) => assert_eq!(st.scale_c, 1.0),
            _ => panic!(),
        }
        let s = parse(r#"{"family":"inhomogeneous","params":{"lambda":1,"x":1,"tau":{"kind":"constant","value":1}}}"#);
        match s.limit_law {
            LawDescriptor::Gaussian(g) => assert_eq!(g.covariance[(0, 0)], 0.5),
            _ => panic!(),
        }
    }

    #[test]
    fn averaging_derives_epsilon() {
        let s = parse(
            r#"{"family":"averaging","params":{"lambda":1,"x":1,"n":[100,10000]},"metric":{"kind":"wasserstein","p":1}}"#,
        );
        assert_eq!(s.epsilons, vec![0.1, 0.01]);
    }

    #[test]
    fn errors_point_at_lines() {
        let text = "{\n  \"family\": \"fou_1d\",\n  \"params\": {\n    \"lambda\": 1,\n    \"hurst\": 1.3,\n    \"x\": 1\n  }\n}";
        let e = parse_scenario(text, None).unwrap_err();
        assert_eq!(e.line, 5);
        assert!(matches!(e.source, Some(Error::InadmissibleRange { .. })));
        let e =
            parse_scenario("{\n \"family\": \"fou_1d\",\n \"params\": {\"lambda\": 1, \"x\": 1}\n}", None).unwrap_err();
        assert!(matches!(e.source, Some(Error::MissingParameter(ref f)) if f == "hurst"), "{e}");
        let e = parse_scenario("{\n \"family\": \"fou_1d\",,\n}", None).unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_scenario(
            r#"{"family":"integrated_ou_stable","params":{"lambda":1,"x":1,"alpha":1.5},"metric":{"kind":"wasserstein","p":1.6}}"#,
            None,
        )
        .unwrap_err();
        assert!(matches!(e.source, Some(Error::MomentViolation { .. })));
        let e = parse_scenario(
            r#"{"family":"fou_1d","params":{"lambda":1,"hurst":0.5,"x":1},"evaluation":{"kind":"monte_carlo","n":100}}"#,
            None,
        )
        .unwrap_err();
        assert!(e.message.contains("exact"));
    }

    #[test]
    fn generalized_ou_matches_brownian_closed_form() {
        let text = r#"{"family":"generalized_ou","params":{"drift":[[1,0],[0,2]],"x":[1,1],"driver":{"kind":"fbm","hurst":0.5}}}"#;
        let s = parse(text);
        let LawDescriptor::Gaussian(g) = marginal_law(&s, 1.0, 0.8).unwrap() else { panic!() };
        for (i, lam) in [1.0f64, 2.0].iter().enumerate() {
            assert_abs_diff_eq!(g.covariance[(i, i)], (1.0 - (-2.0 * lam * 0.8).exp()) / (2.0 * lam), epsilon = 1e-14);
        }
        let bad = r#"{"family":"generalized_ou","params":{"drift":[[1,1],[0,2]],"x":[1,1],"driver":{"kind":"fbm","hurst":0.3}}}"#;
        assert!(parse_scenario(bad, None).is_err());
    }

    #[test]
    fn iterated_scalar_limit() {
        let text = r#"{"family":"iterated_ou","params":{"drift":[[2]],"x":[1],"kernel":{"kind":"exponential","theta":3,"variance":1}}}"#;
        let s = parse(text);
        let LawDescriptor::Gaussian(z) = &s.limit_law else { panic!() };
        assert_abs_diff_eq!(z.covariance[(0, 0)], 3.0 / 5.0, epsilon = 1e-8);
        let LawDescriptor::Gaussian(g) = marginal_law(&s, 1.0, 12.0).unwrap() else { panic!() };
        assert_abs_diff_eq!(g.covariance[(0, 0)], 0.6, epsilon = 1e-8);
        let LawDescriptor::Gaussian(g) = marginal_law(&s, 1.0, 0.0).unwrap() else { panic!() };
        assert_eq!(g.covariance[(0, 0)], 0.0);
    }

    #[test]
    fn linear_diffusion_converges() {
        let text = r#"{"family":"multivariate_gaussian_linear","params":{"drift":[[1,-2],[2,1]],"x":[1,0],"noise":{"kind":"diffusion","matrix":[[1,0],[0,1]]}}}"#;
        let s = parse(text);
        let LawDescriptor::Gaussian(z) = &s.limit_law else { panic!() };
        assert_abs_diff_eq!(z.covariance[(0, 0)], 0.5, epsilon = 1e-12);
        let LawDescriptor::Gaussian(g) = marginal_law(&s, 1.0, 40.0).unwrap() else { panic!() };
        assert!((&g.covariance - &z.covariance).amax() < 1e-12);
    }

    #[test]
    fn csv_matrix_file() {
        let dir = std::env::temp_dir().join(format!("cutofflab-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("drift.csv"), "1,-2\n2,1\n").unwrap();
        let text = r#"{"family":"multivariate_gaussian_linear","params":{"drift":{"csv":"drift.csv"},"x":[1,0],"noise":{"kind":"stationary_covariance","matrix":[[1,0],[0,4]]}}}"#;
        let s = parse_scenario(text, Some(&dir)).unwrap();
        assert_eq!(s.drift().entries[(0, 1)], -2.0);
        std::fs::remove_dir_all(&dir).ok();
    }
}
