//! Minimal SVG heatmaps for correlation and confusion matrices.

use std::fmt::Write;

use ndarray::ArrayView2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapStyle {
    /// Values in [-1, 1]: blue for negative, white at 0, red for positive.
    Diverging,
    /// Values in [0, max]: white to dark blue, with each cell annotated.
    Sequential,
}

const CELL_MAX: f64 = 48.0;
const CELL_MIN: f64 = 4.0;
const MARGIN: f64 = 110.0;
const TITLE_H: f64 = 30.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t.clamp(0.0, 1.0)).round() as u8
}

fn colour(v: f64, style: HeatmapStyle, max: f64) -> (u8, u8, u8) {
    match style {
        HeatmapStyle::Diverging => {
            let t = v.clamp(-1.0, 1.0);
            if t >= 0.0 {
                (lerp(255, 178, t), lerp(255, 24, t), lerp(255, 43, t))
            } else {
                (lerp(255, 33, -t), lerp(255, 102, -t), lerp(255, 172, -t))
            }
        }
        HeatmapStyle::Sequential => {
            let t = if max > 0.0 { v / max } else { 0.0 };
            (lerp(247, 8, t), lerp(251, 48, t), lerp(255, 107, t))
        }
    }
}

/// Renders `values` `(rows, cols)` as a standalone SVG document.
pub fn heatmap(values: &ArrayView2<f64>, row_labels: &[String], col_labels: &[String], title: &str, style: HeatmapStyle) -> String {
    let (nr, nc) = values.dim();
    let cell = (800.0 / nr.max(nc).max(1) as f64).clamp(CELL_MIN, CELL_MAX);
    let labels = cell >= 8.0;
    let annotate = style == HeatmapStyle::Sequential && cell >= 24.0;
    let width = MARGIN + nc as f64 * cell + 20.0;
    let height = TITLE_H + MARGIN + nr as f64 * cell + 20.0;
    let max = values.iter().copied().filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    let font = (cell * 0.6).min(12.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">{}</text>"#, width / 2.0, escape(title));
    let (x0, y0) = (MARGIN, TITLE_H + MARGIN);
    for i in 0..nr {
        for j in 0..nc {
            let v = values[[i, j]];
            let (r, g, b) = colour(v, style, max);
            let (x, y) = (x0 + j as f64 * cell, y0 + i as f64 * cell);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="rgb({r},{g},{b})"><title>{} / {}: {v:.4}</title></rect>"#,
                escape(row_labels.get(i).map_or("", |l| l.as_str())),
                escape(col_labels.get(j).map_or("", |l| l.as_str())),
            );
            if annotate {
                let ink = if max > 0.0 && v / max > 0.5 { "white" } else { "black" };
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" font-size="{font:.1}" text-anchor="middle" dominant-baseline="middle" fill="{ink}">{}</text>"#,
                    x + cell / 2.0,
                    y + cell / 2.0,
                    if v.fract() == 0.0 { format!("{v:.0}") } else { format!("{v:.3}") }
                );
            }
        }
    }
    if labels {
        for (i, l) in row_labels.iter().enumerate().take(nr) {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="{font:.1}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
                x0 - 4.0,
                y0 + (i as f64 + 0.5) * cell,
                escape(l)
            );
        }
        for (j, l) in col_labels.iter().enumerate().take(nc) {
            let (x, y) = (x0 + (j as f64 + 0.5) * cell, y0 - 4.0);
            let _ = writeln!(
                s,
                r#"<text x="{x:.1}" y="{y:.1}" font-size="{font:.1}" text-anchor="start" transform="rotate(-60 {x:.1} {y:.1})">{}</text>"#,
                escape(l)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
