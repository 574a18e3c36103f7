//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use cutofflab::engine::{
    convergence_report, cutoff_classification, distance_curve, karamata_check, profile_curve, CutoffKind,
};
use cutofflab::metrics::{
    density_from_cf, symmetric_grid, tv_gaussian, wp_empirical, wp_gaussian, GaussianLaw, StableLaw,
};
use cutofflab::scenarios::{parse_scenario, Scenario};
use cutofflab::simulate::{
    inhomogeneous_variance, integrated_ou_variance_factor, iterated_ou_limit_covariance, path_rng, sample_driver,
    stable_averaged_kernel, DriverKind, DriverSpec, ScaleFunction, TimeGrid,
};
use cutofflab::special::{erf, gamma};
use cutofflab::spectral::{
    asymptotic_prefactor, cutoff_time_scale, dominant_decomposition, hg_residual_scaled, residual_horizon,
    validate_stability,
};

type Check = std::result::Result<String, String>;

fn scenario(text: &str) -> Scenario {
    parse_scenario(text, None).unwrap_or_else(|e| panic!("{e}"))
}

fn fou(hurst: f64, metric: &str) -> Scenario {
    scenario(&format!(r#"{{"family":"fou_1d","params":{{"lambda":1,"hurst":{hurst},"x":1}},"metric":{metric}}}"#))
}

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_budget(start: Instant, budget: Duration) -> std::result::Result<(), String> {
    let took = start.elapsed();
    ensure(took < budget, format!("took {took:.2?}, budget {budget:?}"))
}

const EPS: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

fn r_grid() -> Vec<f64> {
    (-3..=3).map(f64::from).collect()
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut notes = Vec::new();
    for h in [0.3, 0.5, 0.7] {
        let s = fou(h, r#"{"kind":"tv"}"#);
        let report = convergence_report(&s, &EPS, &r_grid(), 1.0).map_err(|e| e.to_string())?;
        let gaps: Vec<f64> = report.gaps.iter().map(|g| g.sup_gap.unwrap_or(f64::NAN)).collect();
        ensure(gaps.windows(2).all(|w| w[1] < w[0]), format!("H={h}: gaps not decreasing {gaps:?}"))?;
        ensure(gaps[4] <= 5e-3, format!("H={h}: gap {:.3e} at ε=1e-6", gaps[4]))?;
        notes.push(format!("H={h} gap(1e-6)={:.2e}", gaps[4]));
    }
    within_budget(start, Duration::from_secs(30))?;
    Ok(notes.join(", "))
}

fn criterion_2() -> Check {
    let mut worst_gap: f64 = 0.0;
    let mut worst_spread: f64 = 0.0;
    for h in [0.3, 0.5, 0.7] {
        let curves: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .map(|p| {
                let s = fou(h, &format!(r#"{{"kind":"wasserstein","p":{p}}}"#));
                distance_curve(&s, 1e-6, &r_grid(), 1.0).map_err(|e| e.to_string())
            })
            .collect::<Result<_, _>>()?;
        for (k, &r) in r_grid().iter().enumerate() {
            let oracle = (-r).exp();
            let vals: Vec<f64> = curves.iter().map(|c| c.points[k].measured.unwrap()).collect();
            for v in &vals {
                worst_gap = worst_gap.max((v - oracle).abs());
            }
            let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - vals.iter().cloned().fold(f64::INFINITY, f64::min);
            worst_spread = worst_spread.max(spread);
        }
        // the limiting profile itself does not depend on p
        let profiles: Vec<Vec<f64>> = [1.0, 2.0, 3.0]
            .iter()
            .map(|p| {
                let s = fou(h, &format!(r#"{{"kind":"wasserstein","p":{p}}}"#));
                profile_curve(&s, &r_grid(), 1.0).unwrap().points.iter().map(|q| q.theoretical).collect()
            })
            .collect();
        ensure(profiles[0] == profiles[1] && profiles[1] == profiles[2], "profile depends on p")?;
    }
    ensure(worst_gap <= 5e-3, format!("max |W_p - e^{{-r}}| = {worst_gap:.3e}"))?;
    ensure(worst_spread <= 1e-10, format!("p-spread {worst_spread:.3e}"))?;
    Ok(format!("max gap {worst_gap:.2e}, p-spread {worst_spread:.2e}"))
}

struct HgCase {
    name: &'static str,
    rows: Vec<Vec<f64>>,
    x: Vec<f64>,
    /// Residual decays like `1/t` (nontrivial Jordan block) rather than
    /// exponentially.
    algebraic: bool,
}

fn hg_catalog() -> Vec<HgCase> {
    vec![
        HgCase { name: "diagonal", rows: vec![vec![1.0, 0.0], vec![0.0, 2.0]], x: vec![1.0, 1.0], algebraic: false },
        HgCase { name: "jordan", rows: vec![vec![1.0, -1.0], vec![0.0, 1.0]], x: vec![0.0, 1.0], algebraic: true },
        HgCase { name: "rotation", rows: vec![vec![1.0, -2.0], vec![2.0, 1.0]], x: vec![1.0, 0.0], algebraic: false },
        HgCase {
            name: "3x3 mixed",
            rows: vec![vec![1.0, 1.0, 0.0], vec![0.0, 2.0, -3.0], vec![0.0, 3.0, 2.0]],
            x: vec![1.0, 1.0, 1.0],
            algebraic: false,
        },
        HgCase {
            name: "4x4 complex pair",
            rows: vec![
                vec![1.0, -3.0, 0.5, 0.0],
                vec![3.0, 1.0, 0.0, 0.5],
                vec![0.0, 0.0, 2.0, 1.0],
                vec![0.0, 0.0, 0.0, 2.0],
            ],
            x: vec![1.0, 0.0, 1.0, 1.0],
            algebraic: false,
        },
    ]
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let mut notes = Vec::new();
    for case in hg_catalog() {
        let a = validate_stability(&DMatrix::from_fn(case.rows.len(), case.rows.len(), |i, j| case.rows[i][j]))
            .map_err(|e| e.to_string())?;
        let dec = dominant_decomposition(&a, &case.x).map_err(|e| e.to_string())?;
        let t0 = residual_horizon(&a, &case.x, &dec, 1e-6).map_err(|e| e.to_string())?;
        let r0 = hg_residual_scaled(&a, &case.x, &dec, t0).map_err(|e| e.to_string())?;
        let r1 = hg_residual_scaled(&a, &case.x, &dec, 2.0 * t0).map_err(|e| e.to_string())?;
        ensure(r0 <= 1e-6, format!("{}: residual {r0:.3e} at T0={t0}", case.name))?;
        let halves = if case.algebraic { r1 <= 0.5 * r0 * (1.0 + 1e-9) } else { r1 <= 0.5 * r0 || r1 <= 1e-12 };
        ensure(halves, format!("{}: residual {r0:.3e} -> {r1:.3e} from T0={t0}", case.name))?;
        notes.push(format!("{} T0={t0}", case.name));
    }
    within_budget(start, Duration::from_secs(5))?;
    Ok(notes.join(", "))
}

const ROTATION: &str = r#"{"family":"multivariate_gaussian_linear","params":{"drift":[[1,-2],[2,1]],"x":[1,0],"noise":{"kind":"stationary_covariance","matrix":COV}}}"#;

fn criterion_4() -> Check {
    let start = Instant::now();
    let rhos = [0.25, 0.5, 1.0, 2.0, 4.0];
    let iso = scenario(&ROTATION.replace("COV", "[[1,0],[0,1]]"));
    let c = cutoff_classification(&iso, &rhos, 1e-6, 64).map_err(|e| e.to_string())?;
    ensure(
        c.kind == CutoffKind::Profile && c.spread <= 1e-6,
        format!("isotropic: {:?} spread {:.3e}", c.kind, c.spread),
    )?;
    let aniso = scenario(&ROTATION.replace("COV", "[[1,0],[0,4]]"));
    let c = cutoff_classification(&aniso, &rhos, 1e-6, 64).map_err(|e| e.to_string())?;
    let at_one = c.envelopes.iter().find(|e| e.rho == 1.0).expect("ρ=1 evaluated");
    ensure(c.kind == CutoffKind::WindowOnly, "anisotropic rotation not window-only")?;
    ensure(at_one.upper - at_one.lower >= 0.05, format!("spread at ρ=1 is {:.4}", at_one.upper - at_one.lower))?;
    ensure(c.envelopes.iter().all(|e| e.lower < e.upper), "envelopes coincide")?;
    // oracle: 2Φ(‖C^{-1/2}v‖/2) - 1 at v = (1,0) and (0,1)
    let oracle = erf(1.0 / (2.0 * 2f64.sqrt())) - erf(0.5 / (2.0 * 2f64.sqrt()));
    ensure(((at_one.upper - at_one.lower) - oracle).abs() < 1e-3, format!("spread vs oracle {oracle:.4}"))?;
    within_budget(start, Duration::from_secs(10))?;
    Ok(format!("anisotropic envelope at ρ=1: [{:.4}, {:.4}]", at_one.lower, at_one.upper))
}

fn criterion_5() -> Check {
    let e10 = (-10.0f64).exp();
    let cases = [(1, ScaleFunction::One, 10.0), (2, ScaleFunction::One, 12.302585), (1, ScaleFunction::Sqrt, 8.848707)];
    for (ell, sigma, want) in &cases {
        let s = cutoff_time_scale(1.0, *ell, sigma, e10, 1.0).map_err(|e| e.to_string())?;
        // the quoted values carry six decimals; compare against the exact forms
        let exact = 10.0 + (*ell as f64 - 1.0) * 10f64.ln() - sigma.ln_eval(10.0);
        ensure((s.t_cut - exact).abs() <= 1e-9, format!("t_cut {} vs {exact}", s.t_cut))?;
        ensure((s.t_cut - want).abs() <= 5e-7, format!("t_cut {} vs quoted {want}", s.t_cut))?;
    }
    for (lambda, ell, r) in [(2.0, 2, 0.0), (1.0, 2, 0.5)] {
        let sigma = ScaleFunction::One;
        let mut prev = f64::INFINITY;
        for eps in EPS {
            let s = cutoff_time_scale(lambda, ell, &sigma, eps, 1.0).map_err(|e| e.to_string())?;
            let (f, l) = asymptotic_prefactor(&s, r, lambda, ell, &sigma).map_err(|e| e.to_string())?;
            let gap = (f - l).abs();
            ensure(gap < prev, format!("prefactor gap not decreasing at ε={eps} (λ={lambda}, ℓ={ell})"))?;
            prev = gap;
        }
    }
    Ok("schedules exact to 1e-9, prefactor gaps decreasing".into())
}

fn random_gaussian<R: Rng>(rng: &mut R, d: usize) -> GaussianLaw {
    let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cov = &m * m.transpose() + DMatrix::identity(d, d) * 0.1;
    GaussianLaw::new(DVector::from_fn(d, |_, _| rng.sample(StandardNormal)), cov).unwrap()
}

fn criterion_6() -> Check {
    let mut rng = path_rng(0xC0FFEE, 6);
    for _ in 0..50 {
        let a = random_gaussian(&mut rng, 2);
        let b = GaussianLaw::new(DVector::from_fn(2, |_, _| rng.sample(StandardNormal)), a.covariance.clone()).unwrap();
        let c = 0.1 + 5.0 * rng.random::<f64>();
        let shift = DVector::from_fn(2, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let tv = tv_gaussian(&a, &b).unwrap();
        let tv_scaled = tv_gaussian(&a.affine(&DVector::zeros(2), c), &b.affine(&DVector::zeros(2), c)).unwrap();
        let tv_moved = tv_gaussian(&a.affine(&shift, 1.0), &b.affine(&shift, 1.0)).unwrap();
        ensure((tv - tv_scaled).abs() <= 1e-12 && (tv - tv_moved).abs() <= 1e-12, "TV homogeneity/translation")?;
        let b2 = random_gaussian(&mut rng, 2);
        let w = wp_gaussian(&a, &b2, 2.0).unwrap().0;
        let w_scaled = wp_gaussian(&a.affine(&DVector::zeros(2), c), &b2.affine(&DVector::zeros(2), c), 2.0).unwrap().0;
        let w_moved = wp_gaussian(&a.affine(&shift, 1.0), &b2.affine(&shift, 1.0), 2.0).unwrap().0;
        ensure(
            (w_scaled - c * w).abs() <= 1e-9 * (1.0 + c * w),
            format!("W_2 one-homogeneity {w_scaled} vs {}", c * w),
        )?;
        ensure((w_moved - w).abs() <= 1e-9 * (1.0 + w), "W_2 translation invariance")?;
    }

    // shift-additivity: ‖v‖ is an upper bound through the translation
    // coupling; projecting on v/‖v‖ gives a Monte Carlo lower bound.
    let n = 100_000;
    let v = [3.0, 4.0];
    let u = [0.6, 0.8];
    let root = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 2.0]);
    let draw = |seed: u64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut r = path_rng(seed, i as u64);
                let z = DVector::from_fn(2, |_, _| r.sample::<f64, _>(StandardNormal));
                let x = &root * z;
                u[0] * x[0] + u[1] * x[1]
            })
            .collect()
    };
    let xs = draw(1);
    let ys = draw(2);
    let shifted: Vec<Vec<f64>> = xs.iter().map(|x| vec![x + u[0] * v[0] + u[1] * v[1]]).collect();
    let plain: Vec<Vec<f64>> = ys.iter().map(|y| vec![*y]).collect();
    let mut worst = 0.0f64;
    for p in [1.0, 2.0] {
        let est = wp_empirical(&shifted, &plain, p).unwrap();
        let var = (xs.iter().map(|x| x * x).sum::<f64>() + ys.iter().map(|y| y * y).sum::<f64>()) / n as f64;
        let sigma = (var / n as f64).sqrt();
        ensure((est - 5.0).abs() <= 3.0 * sigma, format!("W_{p} shift estimate {est} vs 5 ± {:.4}", 3.0 * sigma))?;
        worst = worst.max((est - 5.0).abs() / sigma);
    }
    let g = GaussianLaw::new(DVector::zeros(2), &root * root.transpose()).unwrap();
    let exact = wp_gaussian(&g.affine(&DVector::from_column_slice(&v), 1.0), &g, 2.0).unwrap().0;
    ensure((exact - 5.0).abs() <= 1e-12, format!("Gaussian W_2 shift {exact}"))?;

    // displacement at infinity
    let far = tv_gaussian(&GaussianLaw::scalar(12.0, 1.0), &GaussianLaw::scalar(0.0, 1.0)).unwrap();
    ensure(far >= 1.0 - 1e-6, format!("TV at 12σ = {far}"))?;

    // shift and scaling continuity on 100 random cases
    let d = 2;
    for case in 0..100 {
        let p = [1.0, 2.0, 3.0][case % 3];
        let v1 = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v2 = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m1 = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m2 = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let dm = (&m1 - &m2).svd(false, false).singular_values.max();
        let (lhs, moment) = if p == 2.0 {
            let g1 = GaussianLaw::new(v1.clone(), &m1 * m1.transpose()).unwrap();
            let g2 = GaussianLaw::new(v2.clone(), &m2 * m2.transpose()).unwrap();
            // E‖X‖^p for X ~ N(0, I_2)
            (wp_gaussian(&g1, &g2, p).unwrap().0, (2f64.powf(p / 2.0) * gamma(1.0 + p / 2.0)).powf(1.0 / p))
        } else {
            let xs: Vec<DVector<f64>> =
                (0..200).map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
            let s1: Vec<Vec<f64>> = xs.iter().map(|x| (&v1 + &m1 * x).iter().copied().collect()).collect();
            let s2: Vec<Vec<f64>> = xs.iter().map(|x| (&v2 + &m2 * x).iter().copied().collect()).collect();
            let mom = (xs.iter().map(|x| x.norm().powf(p)).sum::<f64>() / xs.len() as f64).powf(1.0 / p);
            (wp_empirical(&s1, &s2, p).unwrap(), mom)
        };
        let rhs = (&v1 - &v2).norm() + dm * moment;
        ensure(lhs <= rhs * (1.0 + 1e-9), format!("case {case}: W_{p} {lhs} > bound {rhs}"))?;
    }
    Ok(format!("shift estimate within {worst:.2} sigma"))
}

fn criterion_7() -> Check {
    let mut notes = Vec::new();
    // averaging: ε_N = N^{-1/2}, cut-off at ln(N)/(2λ)
    let s = scenario(
        r#"{"family":"averaging","params":{"lambda":1,"hurst":0.5,"x":1,"n":[100,10000,1000000]},
            "metric":{"kind":"wasserstein","p":1},"evaluation":{"kind":"monte_carlo","n":100000}}"#,
    );
    for (eps, n) in s.epsilons.iter().zip([100.0f64, 1e4, 1e6]) {
        let sched = cutoff_time_scale(1.0, 1, &ScaleFunction::One, *eps, 1.0).unwrap();
        ensure((sched.t_cut - n.ln() / 2.0).abs() <= 1e-12, "averaging cut-off time")?;
    }
    let report = convergence_report(&s, &s.epsilons.clone(), &[-1.0, 0.0, 1.0, 2.0], 1.0).map_err(|e| e.to_string())?;
    ensure(report.monotone, format!("averaging gaps {:?}", report.gaps))?;
    notes.push(format!(
        "averaging gaps {}",
        report
            .gaps
            .iter()
            .map(|g| format!("{:.1e}±{:.0e}", g.sup_gap.unwrap(), g.stderr))
            .collect::<Vec<_>>()
            .join("/")
    ));

    // iterated OU, scalar drift λ, OU driver with covariance e^{-θ|s|}
    let (lambda, theta, horizon) = (2.0, 3.0, 20.0);
    let a = validate_stability(&DMatrix::from_element(1, 1, lambda)).unwrap();
    let r_d = |s: f64| DMatrix::from_element(1, 1, (-theta * s.abs()).exp());
    let (sigma, _) = iterated_ou_limit_covariance(&a, &r_d, horizon, 1e-8).map_err(|e| e.to_string())?;
    let oracle = iterated_oracle(lambda, theta, horizon, 20_000);
    ensure((sigma[(0, 0)] - oracle).abs() <= 1e-6, format!("Σ {} vs oracle {oracle}", sigma[(0, 0)]))?;
    notes.push(format!("Σ={:.8}", sigma[(0, 0)]));

    let (var, limit) = inhomogeneous_variance(1.0, &|s| 1.0 + (-s).exp(), 1.0, 20.0).map_err(|e| e.to_string())?;
    ensure((var - limit).abs() <= 1e-6 && limit == 0.5, format!("inhomogeneous variance {var}"))?;

    let factor = integrated_ou_variance_factor(1.0, 1.0);
    ensure((factor - 0.1680913).abs() <= 1e-7, format!("integrated factor {factor}"))?;

    let ratio = stable_averaged_kernel(1.0, 1.5, 100.0).map_err(|e| e.to_string())?;
    ensure((ratio - 1.0).abs() <= 2e-2, format!("stable ratio {ratio}"))?;

    let law = StableLaw::new(1.5, 1.0, 0.0).unwrap();
    let grid = symmetric_grid((1 << 18) + 1, 0.01);
    let dens = density_from_cf(&law, &grid).map_err(|e| e.to_string())?;
    let mass: f64 =
        grid.windows(2).enumerate().map(|(i, w)| 0.5 * (w[1] - w[0]) * (dens.density[i] + dens.density[i + 1])).sum();
    ensure(
        dens.correction <= 1e-6 && (mass - 1.0).abs() <= 1e-6,
        format!("CF density mass {mass}, correction {}", dens.correction),
    )?;
    notes.push(format!("stable ratio {ratio:.4}"));
    Ok(notes.join(", "))
}

/// Composite Simpson on the scalar limit-covariance formula. The double
/// integral is folded onto the triangle `b ≥ a`, where the integrand is
/// smooth.
fn iterated_oracle(lambda: f64, theta: f64, horizon: f64, n: usize) -> f64 {
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let cross = simpson(&|u| (-theta * u).exp() * (-lambda * u).exp() * lambda, 0.0, horizon, n);
    let inner = |a: f64| simpson(&|b| (-lambda * b).exp() * (-theta * (b - a)).exp(), a, horizon, 2000);
    let double = 2.0 * lambda * lambda * simpson(&|a| (-lambda * a).exp() * inner(a), 0.0, horizon, n / 10);
    1.0 - 2.0 * cross + double
}

fn criterion_8() -> Check {
    let n = 100_000;
    let grid = TimeGrid { step: 0.125, len: 9 };
    let times = grid.times();
    let mut worst = 0.0f64;
    for hurst in [0.3, 0.7] {
        let spec = DriverSpec { kind: DriverKind::Fbm { hurst }, dim: 1, grid };
        let e = sample_driver(&spec, n, 0xC0FFEE).map_err(|e| e.to_string())?;
        let cov = |s: f64, t: f64| 0.5 * (s.powf(2.0 * hurst) + t.powf(2.0 * hurst) - (t - s).abs().powf(2.0 * hurst));
        for i in 1..grid.len {
            for j in i..grid.len {
                let (s, t) = (times[i], times[j]);
                let est = (0..n).map(|p| e.value(p, i)[0] * e.value(p, j)[0]).sum::<f64>() / n as f64;
                let want = cov(s, t);
                // Var(B_s B_t) = E[B_s²]E[B_t²] + E[B_s B_t]² for a Gaussian pair
                let sd = ((cov(s, s) * cov(t, t) + want * want) / n as f64).sqrt();
                worst = worst.max((est - want).abs() / sd);
                ensure((est - want).abs() <= 5.0 * sd, format!("H={hurst}: Gram({s},{t}) {est} vs {want}"))?;
            }
        }
    }

    let run = |threads: usize| -> Vec<u8> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let spec = DriverSpec { kind: DriverKind::Fbm { hurst: 0.7 }, dim: 2, grid };
            let e = sample_driver(&spec, 2_000, 7).unwrap();
            let s = fou(0.5, r#"{"kind":"wasserstein","p":1}"#);
            let mc = scenario(
                r#"{"family":"fou_1d","params":{"lambda":1,"hurst":0.5,"x":1},"metric":{"kind":"wasserstein","p":1},"evaluation":{"kind":"monte_carlo","n":2000}}"#,
            );
            let c = distance_curve(&mc, 1e-2, &[0.0, 1.0], 1.0).unwrap();
            let exact = distance_curve(&s, 1e-2, &[0.0, 1.0], 1.0).unwrap();
            let mut bytes: Vec<u8> = e.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            for p in c.points.iter().chain(&exact.points) {
                bytes.extend(p.measured.unwrap().to_le_bytes());
                bytes.extend(p.stderr.to_le_bytes());
            }
            bytes
        })
    };
    let one = run(1);
    ensure(one == run(4) && one == run(3), "results depend on the thread count")?;
    Ok(format!("worst Gram deviation {worst:.2} sigma, thread counts 1/3/4 identical"))
}

fn criterion_9() -> Check {
    let r = [1.0, 10.0, 100.0];
    for sigma in [ScaleFunction::One, ScaleFunction::Sqrt, ScaleFunction::Power { exponent: 1.0 / 1.5 }] {
        let k = karamata_check(&sigma, &r, 1e6).map_err(|e| e.to_string())?;
        ensure(k.pass, format!("{} fails: {:?}", sigma.tag(), k.ratios))?;
    }
    let k = karamata_check(&ScaleFunction::Sqrt, &[1.0], 1e6).unwrap();
    let oracle = (1e6f64 / (1e6 + 1.0)).sqrt();
    ensure((k.ratios[0].1 - oracle).abs() <= 1e-14, "√t ratio oracle")?;
    let k = karamata_check(&ScaleFunction::Exponential { rate: 1.0 }, &r, 1e6).map_err(|e| e.to_string())?;
    ensure(!k.pass, "e^t passes")?;
    Ok("1, √t, t^(2/3) pass; e^t fails".into())
}

fn main() {
    type Criterion = (&'static str, fn() -> Check);
    let criteria: [Criterion; 9] = [
        ("univariate TV cut-off", criterion_1),
        ("Wasserstein profile universality", criterion_2),
        ("linearization residuals", criterion_3),
        ("profile vs window dichotomy", criterion_4),
        ("cut-off time arithmetic", criterion_5),
        ("metric axioms", criterion_6),
        ("example family limits", criterion_7),
        ("simulator exactness", criterion_8),
        ("slow variation", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let took = start.elapsed();
        match outcome {
            Ok(note) => println!("criterion {}: PASS  {name} ({took:.2?}) {note}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({took:.2?}) {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
