//! Static SVG rendering of the accuracy and threshold curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tsc_core::trainer::MetricRow;

use crate::error::{HarnessError, Result};
use crate::metrics::{row_values, CSV_HEADER};

pub const PLOT_FILE: &str = "curves.svg";

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// Plotted columns and their stroke colours.
pub const SERIES: [(&str, &str); 6] = [
    ("pl_teacher_acc", "#1f77b4"),
    ("pl_student_acc", "#ff7f0e"),
    ("pl_winner_acc", "#2ca02c"),
    ("teacher_acc", "#9467bd"),
    ("student_acc", "#8c564b"),
    ("threshold", "#7f7f7f"),
];

fn column_index(name: &str) -> usize {
    CSV_HEADER
        .iter()
        .position(|c| *c == name)
        .expect("plotted column is in the CSV header")
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders the history to an SVG file.
///
/// Returns `Ok(false)` and writes nothing when the history is empty.
pub fn emit_plots(history: &[MetricRow], path: &Path) -> Result<bool> {
    if history.is_empty() {
        log::warn!("empty history, no plot written to {}", path.display());
        return Ok(false);
    }
    fs::write(path, render(history)).map_err(|e| HarnessError::io(path, e))?;
    Ok(true)
}

pub fn render(history: &[MetricRow]) -> String {
    let max_step = history.iter().map(|r| r.step).max().unwrap_or(0) as f64;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |step: f64| {
        if max_step > 0.0 {
            LEFT + plot_w * step / max_step
        } else {
            LEFT + plot_w / 2.0
        }
    };
    let y = |v: f64| TOP + plot_h * (1.0 - v.clamp(0.0, 1.0));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Target accuracy and pseudo-label accuracy</text>"#,
        LEFT + plot_w / 2.0
    );

    // axes and grid
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black"><line x1="{LEFT}" y1="{}" x2="{}" y2="{}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}"/></g>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h,
        TOP + plot_h
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#dddddd"/><text x="{2}" y="{3:.2}" text-anchor="end">{v:.2}</text>"##,
            y(v),
            LEFT + plot_w,
            LEFT - 6.0,
            y(v) + 4.0
        );
    }
    for i in 0..=4 {
        let step = (max_step * i as f64 / 4.0).round();
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{step}</text>"#,
            x(step),
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );

    for (k, (name, color)) in SERIES.iter().enumerate() {
        let idx = column_index(name);
        let (steps, values): (Vec<f64>, Vec<f64>) = history
            .iter()
            .filter_map(|r| row_values(r)[idx].map(|v| (r.step as f64, v)))
            .unzip();
        if !values.is_empty() {
            let points: Vec<String> = steps
                .iter()
                .zip(&values)
                .map(|(&s, &v)| format!("{:.2},{:.2}", x(s), y(v)))
                .collect();
            let dash = if *name == "threshold" {
                r#" stroke-dasharray="6 4""#
            } else {
                ""
            };
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-series="{name}" data-steps="{}" data-values="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                join(&steps),
                join(&values),
                points.join(" ")
            );
            if values.len() == 1 {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    x(steps[0]),
                    y(values[0])
                );
            }
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + plot_w + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
