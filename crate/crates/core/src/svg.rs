//! Minimal SVG 1.1 output: matrix heatmaps (optionally outlining cells that
//! differ between two structures) and line charts.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::evaluation::EdgeDifference;

const CELL: f64 = 28.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_TOP: f64 = 60.0;
const BAR_WIDTH: f64 = 16.0;

// Viridis, sampled at 5 stops.
const STOPS: [(f64, [u8; 3]); 5] = [
    (0.0, [68, 1, 84]),
    (0.25, [59, 82, 139]),
    (0.5, [33, 145, 140]),
    (0.75, [94, 201, 98]),
    (1.0, [253, 231, 37]),
];

pub const DIFF_A_COLOR: &str = "#e31a1c";
pub const DIFF_B_COLOR: &str = "#ff7f00";

fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let k = STOPS.iter().position(|s| s.0 >= t).unwrap_or(STOPS.len() - 1).max(1);
    let (t0, c0) = STOPS[k - 1];
    let (t1, c1) = STOPS[k];
    let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    let mix = |a: u8, b: u8| (a as f64 + f * (b as f64 - a as f64)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(c0[0], c1[0]), mix(c0[1], c1[1]), mix(c0[2], c1[2]))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Heatmap of `values` (rows are effects, columns causes). Values inside
/// `[0, 1]` use that fixed scale, anything else is scaled to its own range.
/// With an overlay, cells marked as differing get a thick outline.
pub fn render_heatmap(
    values: &Array2<f64>,
    labels: &[String],
    title: &str,
    overlay: Option<&Array2<EdgeDifference>>,
) -> Result<String> {
    let (rows, cols) = values.dim();
    if labels.len() != rows || labels.len() != cols {
        return Err(Error::Shape(format!("{} labels for a {rows}x{cols} matrix", labels.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("heatmap values must be finite".into()));
    }
    if let Some(o) = overlay {
        if o.dim() != values.dim() {
            return Err(Error::Shape("overlay does not match the matrix".into()));
        }
    }
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo >= 0.0 && hi <= 1.0 {
        lo = 0.0;
        hi = 1.0;
    }
    let span = if hi > lo { hi - lo } else { 1.0 };

    let grid_w = cols as f64 * CELL;
    let grid_h = rows as f64 * CELL;
    let width = MARGIN_LEFT + grid_w + 30.0 + BAR_WIDTH + 50.0;
    let height = MARGIN_TOP + grid_h + 40.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<text x="{}" y="20" font-size="14">{}</text>"#, MARGIN_LEFT, escape(title));
    for (c, label) in labels.iter().enumerate() {
        let x = MARGIN_LEFT + (c as f64 + 0.5) * CELL;
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_TOP - 8.0,
            escape(label)
        );
    }
    for (r, label) in labels.iter().enumerate() {
        let y = MARGIN_TOP + (r as f64 + 0.5) * CELL + 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            escape(label)
        );
    }
    let _ = writeln!(out, r#"<g class="cells">"#);
    for ((r, c), v) in values.indexed_iter() {
        let x = MARGIN_LEFT + c as f64 * CELL;
        let y = MARGIN_TOP + r as f64 * CELL;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"><title>{} &lt;- {}: {v:.4}</title></rect>"#,
            color((v - lo) / span),
            escape(&labels[r]),
            escape(&labels[c]),
        );
    }
    let _ = writeln!(out, "</g>");
    if let Some(o) = overlay {
        let _ = writeln!(out, r#"<g class="differences" fill="none" stroke-width="3">"#);
        for ((r, c), d) in o.indexed_iter() {
            let stroke = match d {
                EdgeDifference::Same => continue,
                EdgeDifference::OnlyInA => DIFF_A_COLOR,
                EdgeDifference::OnlyInB => DIFF_B_COLOR,
            };
            let x = MARGIN_LEFT + c as f64 * CELL + 1.5;
            let y = MARGIN_TOP + r as f64 * CELL + 1.5;
            let _ = writeln!(
                out,
                r#"<rect x="{x}" y="{y}" width="{}" height="{}" stroke="{stroke}"/>"#,
                CELL - 3.0,
                CELL - 3.0
            );
        }
        let _ = writeln!(out, "</g>");
    }

    // colorbar
    let bx = MARGIN_LEFT + grid_w + 30.0;
    let steps = 50;
    let _ = writeln!(out, r#"<g class="colorbar">"#);
    for k in 0..steps {
        let t = 1.0 - k as f64 / (steps - 1) as f64;
        let y = MARGIN_TOP + grid_h * k as f64 / steps as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{bx}" y="{y:.2}" width="{BAR_WIDTH}" height="{:.2}" fill="{}"/>"#,
            grid_h / steps as f64 + 0.5,
            color(t)
        );
    }
    for (frac, v) in [(0.0, hi), (0.5, (lo + hi) / 2.0), (1.0, lo)] {
        let y = MARGIN_TOP + grid_h * frac + 4.0;
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{v:.2}</text>"#, bx + BAR_WIDTH + 4.0);
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

/// A named polyline of `(x, y)` points.
pub struct LineSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub fn render_line_chart(series: &[LineSeries], title: &str, x_label: &str, y_label: &str) -> Result<String> {
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if pts.is_empty() {
        return Err(Error::Config("line chart needs at least one point".into()));
    }
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Numeric("line chart points must be finite".into()));
    }
    let (w, h) = (520.0, 340.0);
    let (left, right, top, bottom) = (60.0, 130.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let (xmin, xmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (mut ymin, mut ymax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    ymin = ymin.min(0.0);
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let sx = |x: f64| left + (x - xmin) / xspan * pw;
    let sy = |y: f64| top + ph - (y - ymin) / (ymax - ymin) * ph;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<text x="{left}" y="22" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        out,
        r#"<path d="M{left},{top} L{left},{} L{},{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    for k in 0..=4 {
        let y = ymin + (ymax - ymin) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{y:.2}</text>"#, left - 5.0, sy(y) + 4.0);
        let x = xmin + xspan * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">{x:.2}</text>"#, sx(x), top + ph + 15.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let d: Vec<String> = s
            .points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, sx(x), sy(y)))
            .collect();
        let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, d.join(" "));
        let ly = top + 12.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            left + pw + 10.0,
            left + pw + 30.0,
            left + pw + 35.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg)?;
    Ok(())
}
