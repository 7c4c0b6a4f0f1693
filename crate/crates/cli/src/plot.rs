//! Dependency-free SVG line plots of trajectory CSVs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// The plotted columns of one trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// Step index `T - t`, increasing along the run.
    pub step: Vec<f64>,
    pub cumulative_tau2: Vec<f64>,
    pub offset: Vec<f64>,
}

pub fn is_trajectory_header(header: &csv::StringRecord) -> bool {
    header.get(0) == Some("t") && header.get(1).is_some_and(|h| h == "x0")
}

pub fn read_series(path: &Path) -> Result<Series> {
    let bad = |reason: String| HarnessError::BadCsv {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if !is_trajectory_header(&header) {
        return Err(bad("not a trajectory csv".into()));
    }
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column {name}")))
    };
    let (ci, oi) = (col("cumulative_tau2")?, col("offset")?);
    let mut ts = Vec::new();
    let mut cumulative = Vec::new();
    let mut offset = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("row {}: bad value in column {i}", line + 2)))
        };
        ts.push(num(0)?);
        cumulative.push(num(ci)?);
        offset.push(num(oi)?);
    }
    if ts.is_empty() {
        return Err(bad("no rows".into()));
    }
    let first = ts[0];
    Ok(Series {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        step: ts.iter().map(|t| first - t).collect(),
        cumulative_tau2: cumulative,
        offset,
    })
}

struct Line<'a> {
    label: &'a str,
    color: &'a str,
    xs: &'a [f64],
    ys: &'a [f64],
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn panel(svg: &mut String, top: f64, title: &str, y_label: &str, lines: &[Line]) {
    let (left, right) = (MARGIN, WIDTH - 16.0);
    let (upper, lower) = (top + 28.0, top + PANEL_HEIGHT - 32.0);
    let (x_lo, x_hi) = bounds(lines.iter().flat_map(|l| l.xs.iter().copied()));
    let (y_lo, y_hi) = bounds(lines.iter().flat_map(|l| l.ys.iter().copied()));
    let px = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * (right - left);
    let py = |y: f64| lower - (y - y_lo) / (y_hi - y_lo) * (lower - upper);

    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="{}" font-size="14">{title}</text>"#,
        top + 18.0
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{upper}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        right - left,
        lower - upper
    );
    let _ = writeln!(
        svg,
        r#"<text x="4" y="{upper}" font-size="10">{y_hi:.4}</text><text x="4" y="{lower}" font-size="10">{y_lo:.4}</text>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="{}" font-size="10">step {x_lo}</text><text x="{}" y="{}" font-size="10" text-anchor="end">step {x_hi}</text>"#,
        lower + 14.0,
        right,
        lower + 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{y_label}</text>"#,
        (left + right) / 2.0,
        lower + 26.0
    );
    for (i, line) in lines.iter().enumerate() {
        let points: Vec<String> = line
            .xs
            .iter()
            .zip(line.ys)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            line.color,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="10" fill="{}" text-anchor="end">{}</text>"#,
            right - 6.0,
            upper + 14.0 + 12.0 * i as f64,
            line.color,
            escape(line.label)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn document(panels: usize, body: &str) -> String {
    let height = PANEL_HEIGHT * panels as f64;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Cumulative approximation error and manifold offset against step, one panel each.
pub fn run_svg(series: &Series) -> String {
    let mut body = String::new();
    panel(
        &mut body,
        0.0,
        &format!("{}: cumulative tau2", escape(&series.name)),
        "cumulative tau2",
        &[Line {
            label: &series.name,
            color: PALETTE[0],
            xs: &series.step,
            ys: &series.cumulative_tau2,
        }],
    );
    panel(
        &mut body,
        PANEL_HEIGHT,
        &format!("{}: manifold offset", escape(&series.name)),
        "offset",
        &[Line {
            label: &series.name,
            color: PALETTE[1],
            xs: &series.step,
            ys: &series.offset,
        }],
    );
    document(2, &body)
}

/// Overlay of every run's cumulative error and offset.
pub fn comparison_svg(all: &[Series]) -> String {
    let lines = |pick: fn(&Series) -> &[f64]| -> Vec<Line> {
        all.iter()
            .enumerate()
            .map(|(i, s)| Line {
                label: &s.name,
                color: PALETTE[i % PALETTE.len()],
                xs: &s.step,
                ys: pick(s),
            })
            .collect()
    };
    let mut body = String::new();
    panel(
        &mut body,
        0.0,
        "cumulative tau2",
        "cumulative tau2",
        &lines(|s| &s.cumulative_tau2),
    );
    panel(
        &mut body,
        PANEL_HEIGHT,
        "manifold offset",
        "offset",
        &lines(|s| &s.offset),
    );
    document(2, &body)
}

/// Trajectory CSVs in `dir`, sorted by name.
pub fn trajectory_csvs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::io(format!("cannot list {}", dir.display()), e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| HarnessError::io(format!("cannot list {}", dir.display()), e))?
            .path();
        if path.extension().is_some_and(|e| e == "csv") {
            let mut reader = csv::Reader::from_path(&path).map_err(|e| HarnessError::BadCsv {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            let header = reader.headers().map_err(|e| HarnessError::BadCsv {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            if is_trajectory_header(header) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}
