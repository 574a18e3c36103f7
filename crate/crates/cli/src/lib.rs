//! Command-line front end for `cutofflab`.
//!
//! Every command reads one scenario file and writes its artifacts to the
//! output directory as `<scenario>-<command>.<ext>`. Each artifact starts
//! with a provenance line carrying the SHA-256 of the scenario bytes, the
//! seed and the crate version.
//!
//! Exit status: 0 on success, 1 for configuration or usage errors, 2 for
//! numerical failures (including a failed `verify`).

pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cutofflab::engine::{
    convergence_report, cutoff_classification, distance_curve, karamata_check, profile_curve, CutoffKind,
    CLASSIFICATION_TOL,
};
use cutofflab::export::{curve_table, fmt_f64, Provenance, Table};
use cutofflab::scenarios::{parse_scenario, Evaluation, Scenario};
use cutofflab::spectral::{cutoff_time_scale, dominant_decomposition, omega_limit_set, CutoffSchedule, OmegaKind};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "CUTOFFLAB_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) | CliError::Verification(_) => 2,
        }
    }
}

impl From<cutofflab::Error> for CliError {
    fn from(e: cutofflab::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cutofflab", version, about = "Small-noise cut-off analysis for linear processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral report: λ, ℓ, m*, θ, the ω-limit kind and cut-off times.
    Analyze(Options),
    /// Limiting profile on the r grid.
    Profile(Options),
    /// Measured distance curves against the profile, one per ε.
    Curve(Options),
    /// Profile/window classification and sup-gap convergence.
    Classify(Options),
    /// Run the applicable checks for the scenario.
    Verify(Options),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seed for Monte Carlo evaluations; decimal or 0x-prefixed hex.
    /// Overrides the scenario's seed (default 0xC0FFEE).
    #[arg(long, value_parser = parse_seed)]
    pub seed: Option<u64>,
    /// Comma-separated noise levels; defaults to the scenario's list.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub epsilon: Vec<f64>,
    /// Window offsets as `start:stop:step`.
    #[arg(long, default_value = "-3:3:1", value_parser = parse_r_grid, allow_hyphen_values = true)]
    pub r_grid: RGrid,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RGrid(pub Vec<f64>);

pub fn parse_seed(s: &str) -> Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("invalid seed {s:?}: {e}"))
}

pub fn parse_r_grid(s: &str) -> Result<RGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        return Err(format!("expected start:stop:step, got {s:?}"));
    };
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let (a, b, step) = (num(a)?, num(b)?, num(step)?);
    if !(a.is_finite() && b.is_finite() && step > 0.0 && b >= a) {
        return Err(format!("need finite start ≤ stop and step > 0, got {s:?}"));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize + 1;
    if n > 1_000_000 {
        return Err(format!("grid {s:?} has {n} points"));
    }
    Ok(RGrid((0..n).map(|k| a + k as f64 * step).collect()))
}

/// Fully resolved invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub command: CommandKind,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub epsilons: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Analyze,
    Profile,
    Curve,
    Classify,
    Verify,
}

impl CommandKind {
    fn name(self) -> &'static str {
        match self {
            CommandKind::Analyze => "analyze",
            CommandKind::Profile => "profile",
            CommandKind::Curve => "curve",
            CommandKind::Classify => "classify",
            CommandKind::Verify => "verify",
        }
    }
}

impl From<Cli> for RunConfig {
    fn from(cli: Cli) -> Self {
        let (command, o) = match cli.command {
            Command::Analyze(o) => (CommandKind::Analyze, o),
            Command::Profile(o) => (CommandKind::Profile, o),
            Command::Curve(o) => (CommandKind::Curve, o),
            Command::Classify(o) => (CommandKind::Classify, o),
            Command::Verify(o) => (CommandKind::Verify, o),
        };
        RunConfig {
            scenario: o.scenario,
            command,
            out: o.out,
            seed: o.seed,
            epsilons: o.epsilon,
            r_grid: o.r_grid.0,
            format: o.format,
        }
    }
}

/// Parses `args` (program name first), runs and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&RunConfig::from(cli)) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("cutofflab: {e}");
            e.exit_code()
        }
    }
}

fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

/// Runs one command and returns the artifacts written.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    match thread_cap()? {
        None => run_inner(cfg),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(|| run_inner(cfg)),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads the scenario and applies the command-line overrides.
pub fn load(cfg: &RunConfig) -> Result<(Scenario, Provenance), CliError> {
    let bytes =
        std::fs::read(&cfg.scenario).map_err(|e| CliError::Config(format!("{}: {e}", cfg.scenario.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", cfg.scenario.display())))?;
    let mut s = parse_scenario(text, cfg.scenario.parent())
        .map_err(|e| CliError::Config(format!("{}: {e}", cfg.scenario.display())))?;
    if let Some(seed) = cfg.seed {
        s.seed = seed;
    }
    if !cfg.epsilons.is_empty() {
        if let Some(bad) = cfg.epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(CliError::Config(format!("epsilon {bad} not in (0,1)")));
        }
        s.epsilons = cfg.epsilons.clone();
    }
    if cfg.r_grid.is_empty() {
        return Err(CliError::Config("empty r grid".into()));
    }
    let provenance =
        Provenance { config_sha256: sha256_hex(&bytes), seed: s.seed, version: env!("CARGO_PKG_VERSION").to_string() };
    Ok((s, provenance))
}

fn artifact(cfg: &RunConfig, s: &Scenario, suffix: &str, ext: &str) -> PathBuf {
    let stem: String =
        s.name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    cfg.out.join(format!("{stem}-{}{suffix}.{ext}", cfg.command.name()))
}

fn no_plot(cfg: &RunConfig) -> CliError {
    CliError::Config(format!("{} has no svg output; use csv or json", cfg.command.name()))
}

fn run_inner(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let (s, prov) = load(cfg)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::Config(format!("{}: {e}", cfg.out.display())))?;
    match cfg.command {
        CommandKind::Analyze => analyze(cfg, &s, &prov),
        CommandKind::Profile => profile(cfg, &s, &prov),
        CommandKind::Curve => curve(cfg, &s, &prov),
        CommandKind::Classify => classify(cfg, &s, &prov),
        CommandKind::Verify => verify(cfg, &s, &prov),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub scenario: String,
    pub lambda: f64,
    pub ell: usize,
    pub m_star: usize,
    pub theta: Vec<f64>,
    pub omega_kind: OmegaKind,
    pub omega_diameter: f64,
    pub schedules: Vec<CutoffSchedule>,
}

pub fn spectral_report(s: &Scenario) -> Result<SpectralReport, CliError> {
    let dec = dominant_decomposition(&s.drift(), &s.initial())?;
    let omega = omega_limit_set(&dec, 256)?;
    let schedules = s
        .epsilons
        .iter()
        .map(|&e| cutoff_time_scale(dec.rate, dec.block_size, &s.scale, e, s.window))
        .collect::<cutofflab::Result<Vec<_>>>()?;
    Ok(SpectralReport {
        scenario: s.name.clone(),
        lambda: dec.rate,
        ell: dec.block_size,
        m_star: dec.mode_count,
        theta: dec.angular_velocities,
        omega_kind: omega.kind,
        omega_diameter: omega.diameter,
        schedules,
    })
}

fn kind_tag<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
}

fn analyze(cfg: &RunConfig, s: &Scenario, prov: &Provenance) -> Result<Vec<PathBuf>, CliError> {
    let report = spectral_report(s)?;
    let theta: Vec<String> = report.theta.iter().map(|t| fmt_f64(*t)).collect();
    println!(
        "lambda = {}, ell = {}, m* = {}, theta = ({}), omega: {}",
        report.lambda,
        report.ell,
        report.m_star,
        report.theta.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "),
        kind_tag(&report.omega_kind)
    );
    let path = artifact(cfg, s, "", cfg.format.ext());
    match cfg.format {
        Format::Json => output::emit_json(&path, &report, prov)?,
        Format::Csv => {
            let mut t = Table::new(&["quantity", "value"]);
            t.push(vec!["lambda".into(), fmt_f64(report.lambda)]);
            t.push(vec!["ell".into(), report.ell.to_string()]);
            t.push(vec!["m_star".into(), report.m_star.to_string()]);
            t.push(vec!["theta".into(), theta.join(";")]);
            t.push(vec!["omega_kind".into(), kind_tag(&report.omega_kind)]);
            t.push(vec!["omega_diameter".into(), fmt_f64(report.omega_diameter)]);
            for sched in &report.schedules {
                t.push(vec![format!("t_star@{}", fmt_f64(sched.epsilon)), fmt_f64(sched.t_star)]);
                t.push(vec![format!("t_cut@{}", fmt_f64(sched.epsilon)), fmt_f64(sched.t_cut)]);
            }
            output::emit_csv(&path, &t, prov)?;
        }
        Format::Svg => return Err(no_plot(cfg)),
    }
    Ok(vec![path])
}

fn profile(cfg: &RunConfig, s: &Scenario, prov: &Provenance) -> Result<Vec<PathBuf>, CliError> {
    let curve = profile_curve(s, &cfg.r_grid, s.window)?;
    let path = artifact(cfg, s, "", cfg.format.ext());
    match cfg.format {
        Format::Csv => {
            let mut t = Table::new(&["r", "profile"]);
            for p in &curve.points {
                t.push(vec![fmt_f64(p.r), fmt_f64(p.theoretical)]);
            }
            output::emit_csv(&path, &t, prov)?;
        }
        Format::Json => output::emit_json(&path, &curve, prov)?,
        Format::Svg => output::emit_plot(&path, &[], &curve, prov)?,
    }
    Ok(vec![path])
}

fn curve(cfg: &RunConfig, s: &Scenario, prov: &Provenance) -> Result<Vec<PathBuf>, CliError> {
    let curves = s
        .epsilons
        .iter()
        .map(|&e| distance_curve(s, e, &cfg.r_grid, s.window))
        .collect::<cutofflab::Result<Vec<_>>>()?;
    let path = artifact(cfg, s, "", cfg.format.ext());
    match cfg.format {
        Format::Csv => output::emit_csv(&path, &curve_table(&curves), prov)?,
        Format::Json => output::emit_json(&path, &curves, prov)?,
        Format::Svg => output::emit_plot(&path, &curves, &profile_curve(s, &cfg.r_grid, s.window)?, prov)?,
    }
    Ok(vec![path])
}

fn classify(cfg: &RunConfig, s: &Scenario, prov: &Provenance) -> Result<Vec<PathBuf>, CliError> {
    let report = convergence_report(s, &s.epsilons, &cfg.r_grid, s.window)?;
    let c = &report.classification;
    println!(
        "{}: {} (omega {}, spread {:e}, tolerance {:e}), gaps {}",
        report.scenario,
        kind_tag(&c.kind),
        kind_tag(&c.omega_kind),
        c.spread,
        c.tolerance,
        if report.monotone { "decreasing" } else { "not decreasing" }
    );
    match cfg.format {
        Format::Json => {
            let path = artifact(cfg, s, "", "json");
            output::emit_json(&path, &report, prov)?;
            Ok(vec![path])
        }
        Format::Csv => {
            let mut gaps = Table::new(&["epsilon", "sup_gap", "stderr", "skipped_r"]);
            for g in &report.gaps {
                let skipped: Vec<String> = g.negative_time.iter().map(|r| fmt_f64(*r)).collect();
                gaps.push(vec![
                    fmt_f64(g.epsilon),
                    g.sup_gap.map(fmt_f64).unwrap_or_default(),
                    fmt_f64(g.stderr),
                    skipped.join(";"),
                ]);
            }
            let mut env = Table::new(&["rho", "lower", "upper"]);
            for e in &c.envelopes {
                env.push(vec![fmt_f64(e.rho), fmt_f64(e.lower), fmt_f64(e.upper)]);
            }
            let gap_path = artifact(cfg, s, "-gaps", "csv");
            let env_path = artifact(cfg, s, "-envelopes", "csv");
            output::emit_csv(&gap_path, &gaps, prov)?;
            output::emit_csv(&env_path, &env, prov)?;
            Ok(vec![gap_path, env_path])
        }
        Format::Svg => Err(no_plot(cfg)),
    }
}

/// Outcome of one `verify` check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Info,
}

/// Largest sup-gap allowed at the smallest ε.
pub const VERIFY_GAP_TOL: f64 = 5e-3;

pub fn verify_checks(s: &Scenario, r_grid: &[f64]) -> Result<Vec<Check>, CliError> {
    let check = |name: &str, ok: bool, detail: String| Check {
        name: name.into(),
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    };
    let mut out = Vec::new();

    let k = karamata_check(&s.scale, &[0.5, 1.0, 2.0], 1e6)?;
    out.push(check("slow_variation", k.pass, format!("sigma = {}, log growth {:e}", s.scale.tag(), k.log_growth)));

    let report = spectral_report(s)?;
    let positive = report.schedules.iter().all(|c| c.t_cut > 0.0);
    out.push(check(
        "cutoff_times",
        positive,
        format!("t_cut at smallest epsilon {}", report.schedules.last().map_or(f64::NAN, |c| c.t_cut)),
    ));

    let conv = convergence_report(s, &s.epsilons, r_grid, s.window)?;
    out.push(check("gaps_decrease", conv.monotone, format!("{} noise levels", conv.gaps.len())));
    let last = conv.gaps.iter().rev().find_map(|g| g.sup_gap.map(|v| (g.epsilon, v, g.stderr)));
    match last {
        Some((eps, gap, se)) => {
            let slack = if matches!(s.evaluation, Evaluation::MonteCarlo { .. }) { 3.0 * se } else { 0.0 };
            out.push(check(
                "final_gap",
                gap <= VERIFY_GAP_TOL + slack,
                format!("sup gap {gap:e} ± {se:e} at epsilon {eps:e}"),
            ));
        }
        None => out.push(check("final_gap", false, "no admissible r at any epsilon".into())),
    }

    let c = cutoff_classification(s, &[0.5, 1.0, 2.0], CLASSIFICATION_TOL, 64)?;
    out.push(Check {
        name: "classification".into(),
        status: Status::Info,
        detail: format!(
            "{} (spread {:e})",
            if c.kind == CutoffKind::Profile { "profile" } else { "window-only" },
            c.spread
        ),
    });

    let eps = s.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let admissible: Vec<f64> = conv
        .gaps
        .iter()
        .find(|g| g.epsilon == eps)
        .map(|g| r_grid.iter().copied().filter(|r| !g.negative_time.contains(r)).collect())
        .unwrap_or_default();
    if !admissible.is_empty() {
        let a = distance_curve(s, eps, &admissible, s.window)?;
        let b = distance_curve(s, eps, &admissible, s.window)?;
        let same = a.points.iter().zip(&b.points).all(|(x, y)| {
            x.measured.map(f64::to_bits) == y.measured.map(f64::to_bits) && x.stderr.to_bits() == y.stderr.to_bits()
        });
        out.push(check("reproducible", same, format!("two runs at epsilon {eps:e}")));
    }
    Ok(out)
}

fn verify(cfg: &RunConfig, s: &Scenario, prov: &Provenance) -> Result<Vec<PathBuf>, CliError> {
    let checks = verify_checks(s, &cfg.r_grid)?;
    for c in &checks {
        println!("{:<16} {:<4} {}", c.name, kind_tag(&c.status), c.detail);
    }
    let path = artifact(cfg, s, "", cfg.format.ext());
    match cfg.format {
        Format::Csv => {
            let mut t = Table::new(&["check", "status", "detail"]);
            for c in &checks {
                t.push(vec![c.name.clone(), kind_tag(&c.status), c.detail.replace(',', ";")]);
            }
            output::emit_csv(&path, &t, prov)?;
        }
        Format::Json => output::emit_json(&path, &checks, prov)?,
        Format::Svg => return Err(no_plot(cfg)),
    }
    let failed: Vec<&str> = checks.iter().filter(|c| c.status == Status::Fail).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(vec![path])
    } else {
        Err(CliError::Verification(format!("{} (report in {})", failed.join(", "), path.display())))
    }
}
