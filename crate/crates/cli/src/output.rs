//! Artifact writers: CSV tables, JSON records and SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cutofflab::engine::ProfileCurve;
use cutofflab::export::{Provenance, Table};
use serde::Serialize;

use crate::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes `table` with a leading provenance comment. Nothing is created for
/// an empty table.
pub fn emit_csv(path: &Path, table: &Table, provenance: &Provenance) -> Result<(), CliError> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf, provenance).map_err(|e| CliError::Numerical(e.to_string()))?;
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct Record<'a, T: Serialize> {
    provenance: &'a Provenance,
    result: &'a T,
}

pub fn emit_json<T: Serialize>(path: &Path, value: &T, provenance: &Provenance) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&Record { provenance, result: value })
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Renders measured series (points with error bars) and one theoretical line.
pub fn render_svg(series: &[ProfileCurve], theory: &ProfileCurve, provenance: &Provenance) -> Result<String, CliError> {
    let points = series.iter().flat_map(|c| &c.points).filter(|p| p.measured.is_some());
    let measured_extent = points.clone().map(|p| (p.r, p.measured.unwrap_or(0.0) + p.stderr));
    let theory_extent = theory.points.iter().map(|p| (p.r, p.theoretical));
    let extent: Vec<(f64, f64)> =
        measured_extent.chain(theory_extent).filter(|(r, y)| r.is_finite() && y.is_finite()).collect();
    if extent.is_empty() {
        return Err(CliError::Numerical("nothing to plot".into()));
    }
    let (mut r_lo, mut r_hi) =
        extent.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (r, _)| (a.min(*r), b.max(*r)));
    if r_hi - r_lo < 1e-12 {
        r_lo -= 0.5;
        r_hi += 0.5;
    }
    let y_hi = extent.iter().map(|(_, y)| *y).fold(0.0, f64::max).max(1e-300) * 1.05;
    let sx = |r: f64| LEFT + (r - r_lo) / (r_hi - r_lo) * (WIDTH - LEFT - RIGHT);
    let sy = |y: f64| HEIGHT - BOTTOM - y / y_hi * (HEIGHT - TOP - BOTTOM);

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, "<!-- {} -->", provenance.header_line().trim_start_matches("# "));
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // axes
    let (x0, x1, y0, y1) = (sx(r_lo), sx(r_hi), sy(0.0), sy(y_hi));
    let _ = writeln!(
        w,
        r#"<g class="axes" stroke="black"><line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/><line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/></g>"#
    );
    for k in 0..=5 {
        let r = r_lo + (r_hi - r_lo) * k as f64 / 5.0;
        let y = y_hi * k as f64 / 5.0;
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, sx(r), y0 + 18.0, tick(r));
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, sy(y) + 4.0, tick(y));
    }
    let _ = writeln!(
        w,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">r</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        w,
        r#"<text class="ylabel" x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">distance</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    let line: Vec<String> = theory
        .points
        .iter()
        .filter(|p| p.theoretical.is_finite())
        .map(|p| format!("{:.2},{:.2}", sx(p.r), sy(p.theoretical)))
        .collect();
    let _ = writeln!(
        w,
        r#"<polyline class="theory" fill="none" stroke="black" stroke-width="1.5" points="{}"/>"#,
        line.join(" ")
    );
    let mut legend_y = TOP + 10.0;
    let legend_x = WIDTH - RIGHT + 15.0;
    let _ = writeln!(w, r#"<text x="{legend_x:.2}" y="{legend_y:.2}">profile</text>"#);

    for (i, c) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(w, r#"<g class="series" fill="{color}" stroke="{color}">"#);
        for p in &c.points {
            let Some(m) = p.measured else { continue };
            let (cx, cy) = (sx(p.r), sy(m));
            if p.stderr > 0.0 {
                let _ = writeln!(
                    w,
                    r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}"/>"#,
                    sy(m - p.stderr),
                    sy(m + p.stderr)
                );
            }
            let _ = writeln!(w, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3"/>"#);
        }
        let _ = writeln!(w, "</g>");
        legend_y += 18.0;
        let label = c.epsilon.map_or_else(|| "measured".to_string(), |e| format!("ε = {e:e}"));
        let _ = writeln!(w, r#"<text x="{legend_x:.2}" y="{legend_y:.2}" fill="{color}">{label}</text>"#);
    }
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{}", (v * 1000.0).round() / 1000.0)
    } else {
        format!("{v:.1e}")
    }
}

pub fn emit_plot(
    path: &Path,
    series: &[ProfileCurve],
    theory: &ProfileCurve,
    provenance: &Provenance,
) -> Result<(), CliError> {
    let svg = render_svg(series, theory, provenance)?;
    fs::write(path, svg).map_err(|e| io_err(path, e))
}
