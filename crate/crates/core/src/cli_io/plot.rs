//! Static SVG 1.1 line plots of trajectory logs.
//!
//! Output depends only on the logs: fixed palette, fixed ordering (log order,
//! then mode order), no timestamps. Series longer than [`MAX_POINTS`] are
//! thinned to an evenly strided subsequence that keeps the last point.

use std::fmt::Write as _;
use std::path::Path;

use crate::diagnostics::TrajectoryLog;
use crate::error::{Error, Result};

pub const MAX_POINTS: usize = 2_000;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 560.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 400.0;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Product singular values against time.
    Spectrum,
    /// `√dᵢ` against time.
    SqrtModes,
    /// Loss against step on a log scale.
    Loss,
    /// Balancedness drift against step.
    Drift,
    /// `σᵢ(∏W)^{1/L}` against time.
    NthRoot,
}

impl PlotKind {
    pub const ALL: [PlotKind; 5] = [PlotKind::Spectrum, PlotKind::SqrtModes, PlotKind::Loss, PlotKind::Drift, PlotKind::NthRoot];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Spectrum => "spectrum",
            PlotKind::SqrtModes => "sqrt_modes",
            PlotKind::Loss => "loss",
            PlotKind::Drift => "drift",
            PlotKind::NthRoot => "nth_root",
        }
    }

    pub fn parse(s: &str) -> Option<PlotKind> {
        PlotKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn thin(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points;
    }
    let stride = points.len().div_ceil(MAX_POINTS - 1);
    let last = *points.last().expect("non-empty");
    let mut out: Vec<_> = points.into_iter().step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

fn collect_series(logs: &[TrajectoryLog], kind: PlotKind) -> Result<(Vec<Series>, &'static str, &'static str)> {
    let mut out = Vec::new();
    for log in logs {
        let name = &log.metadata.label;
        let recs = &log.records;
        let k = recs[0].product_singular_values.len();
        match kind {
            PlotKind::Spectrum | PlotKind::NthRoot => {
                let p = if kind == PlotKind::NthRoot { 1.0 / log.metadata.config.depth as f64 } else { 1.0 };
                for i in 0..k {
                    let pts = recs.iter().map(|r| (r.time, r.product_singular_values[i].powf(p))).collect();
                    out.push(Series { label: format!("{name} sv_{}", i + 1), points: pts });
                }
            }
            PlotKind::SqrtModes => {
                let cores: Vec<_> = recs
                    .iter()
                    .map(|r| r.core.as_ref().ok_or_else(|| Error::Unsupported(format!("log `{name}` has no core variables"))))
                    .collect::<Result<_>>()?;
                for i in 0..cores[0].d.len() {
                    let pts = recs.iter().zip(&cores).map(|(r, c)| (r.time, c.d[i].max(0.0).sqrt())).collect();
                    out.push(Series { label: format!("{name} sqrt d_{}", i + 1), points: pts });
                }
            }
            PlotKind::Loss => {
                // Zero losses have no place on a log axis.
                let pts = recs.iter().filter(|r| r.loss > 0.0).map(|r| (r.step as f64, r.loss.log10())).collect();
                out.push(Series { label: name.clone(), points: pts });
            }
            PlotKind::Drift => {
                let pts = recs
                    .iter()
                    .map(|r| {
                        r.balancedness_drift
                            .map(|d| (r.step as f64, d))
                            .ok_or_else(|| Error::Unsupported(format!("log `{name}` has no balancedness drift")))
                    })
                    .collect::<Result<_>>()?;
                out.push(Series { label: name.clone(), points: pts });
            }
        }
    }
    let (x, y) = match kind {
        PlotKind::Spectrum => ("time", "singular values of the product"),
        PlotKind::SqrtModes => ("time", "sqrt(d_i)"),
        PlotKind::Loss => ("step", "loss (log10)"),
        PlotKind::Drift => ("step", "||(A'A - BB')(t) - (A'A - BB')(0)||_F"),
        PlotKind::NthRoot => ("time", "singular values ^ (1/L)"),
    };
    for s in &mut out {
        s.points = thin(std::mem::take(&mut s.points));
    }
    Ok((out, x, y))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// SVG text of `kind` over `logs`.
pub fn render_plot(logs: &[TrajectoryLog], kind: PlotKind) -> Result<String> {
    if logs.is_empty() || logs.iter().any(|l| l.records.is_empty()) {
        return Err(Error::invalid("cannot plot an empty log"));
    }
    let (series, x_label, y_label) = collect_series(logs, kind)?;
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (RIGHT - LEFT);
    let py = |y: f64| BOTTOM - (y - y0) / (y1 - y0) * (BOTTOM - TOP);

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let title = logs[0].metadata.scenario.clone().unwrap_or_else(|| logs[0].metadata.label.clone());
    let _ = writeln!(
        w,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{} ({})</text>"#,
        (LEFT + RIGHT) / 2.0,
        escape(&title),
        kind.name()
    );
    let _ = writeln!(w, r#"<g stroke="black" stroke-width="1" fill="none">"#);
    let _ = writeln!(w, r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}"/>"#, RIGHT - LEFT, BOTTOM - TOP);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (tx, ty) = (LEFT + f * (RIGHT - LEFT), BOTTOM - f * (BOTTOM - TOP));
        let _ = writeln!(w, r#"<line x1="{tx}" y1="{BOTTOM}" x2="{tx}" y2="{}"/>"#, BOTTOM + 5.0);
        let _ = writeln!(w, r#"<line x1="{}" y1="{ty}" x2="{LEFT}" y2="{ty}"/>"#, LEFT - 5.0);
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, r#"<g font-family="sans-serif" font-size="11">"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (tx, ty) = (LEFT + f * (RIGHT - LEFT), BOTTOM - f * (BOTTOM - TOP));
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let ylab = if kind == PlotKind::Loss { format!("1e{}", tick_label(yv)) } else { tick_label(yv) };
        let _ = writeln!(w, r#"<text x="{tx}" y="{}" text-anchor="middle">{}</text>"#, BOTTOM + 18.0, tick_label(xv));
        let _ = writeln!(w, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 8.0, ty + 4.0, ylab);
    }
    let _ = writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 40.0,
        escape(x_label)
    );
    let (yx, yy) = (20.0, (TOP + BOTTOM) / 2.0);
    let _ = writeln!(
        w,
        r#"<text x="{yx}" y="{yy}" text-anchor="middle" transform="rotate(-90 {yx} {yy})">{}</text>"#,
        escape(y_label)
    );
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, r#"<g fill="none" stroke-width="1.5">"#);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{},{}", px(x), py(y))).collect();
        let _ = writeln!(w, r#"<polyline stroke="{}" points="{}"/>"#, PALETTE[i % PALETTE.len()], pts.join(" "));
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, r#"<g font-family="sans-serif" font-size="11">"#);
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 10.0 + 16.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            w,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#,
            RIGHT + 15.0,
            RIGHT + 35.0
        );
        let _ = writeln!(w, r#"<text x="{}" y="{}">{}</text>"#, RIGHT + 40.0, y + 4.0, escape(&s.label));
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}

pub fn emit_plot(logs: &[TrajectoryLog], kind: PlotKind, path: &Path) -> Result<()> {
    let svg = render_plot(logs, kind)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    }
    std::fs::write(path, svg).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Vertex lists of every polyline in an SVG produced by [`render_plot`].
pub fn polyline_points(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter_map(|l| l.split_once(r#"points=""#).map(|(_, rest)| rest.split('"').next().unwrap_or("")))
        .map(|pts| {
            pts.split_whitespace()
                .filter_map(|p| p.split_once(','))
                .filter_map(|(x, y)| Some((x.parse().ok()?, y.parse().ok()?)))
                .collect()
        })
        .collect()
}
