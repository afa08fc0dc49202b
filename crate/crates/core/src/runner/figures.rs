//! Minimal hand-written SVG bar charts. Output depends only on the data,
//! with coordinates printed at fixed precision, so files are byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::export::file_stem;
use super::GridReport;
use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 90.0;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    values: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bar chart on a `[0, y_max]` axis.
fn bar_chart(title: &str, y_label: &str, categories: &[&str], series: &[Series], y_max: f64) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y_max = if y_max > 0.0 { y_max } else { 1.0 };
    let slot = plot_w / categories.len().max(1) as f64;
    let bar_w = slot * 0.8 / series.len().max(1) as f64;
    let y = |v: f64| TOP + plot_h * (1.0 - (v / y_max).clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    // Axes and ticks.
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        draw_line(&mut s, LEFT - 4.0, y(v), LEFT + plot_w, y(v), if i == 0 { "black" } else { "#dddddd" });
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            LEFT - 6.0,
            y(v) + 4.0
        );
    }
    draw_line(&mut s, LEFT, TOP, LEFT, TOP + plot_h, "black");
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    // Bars.
    for (c, name) in categories.iter().enumerate() {
        let x0 = LEFT + slot * c as f64 + slot * 0.1;
        for (k, ser) in series.iter().enumerate() {
            let v = ser.values.get(c).copied().unwrap_or(f64::NAN);
            if !v.is_finite() {
                continue;
            }
            let top = y(v);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{} {}: {v:.6}</title></rect>"#,
                x0 + bar_w * k as f64,
                top,
                bar_w,
                TOP + plot_h - top,
                ser.color,
                escape(name),
                escape(ser.label)
            );
        }
        let lx = LEFT + slot * (c as f64 + 0.5);
        let ly = TOP + plot_h + 12.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="end" transform="rotate(-45 {lx:.2} {ly:.2})">{}</text>"#,
            escape(name)
        );
    }
    // Legend.
    for (k, ser) in series.iter().enumerate() {
        let lx = WIDTH - RIGHT - 150.0;
        let ly = TOP + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            ly - 9.0,
            ser.color,
            lx + 14.0,
            ly,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn draw_line(s: &mut String, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
    let _ = writeln!(
        s,
        r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"/>"#
    );
}

fn write(path: PathBuf, content: &str) -> Result<PathBuf> {
    fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// One initial-vs-terminal share chart per completed scenario
/// (`lambda_<scenario>.svg`) plus `gini_by_scenario.svg`.
pub fn render_figures(report: &GridReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref().join("figures");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();

    for r in report.results() {
        let ids: Vec<&str> = r.region_ids.iter().map(String::as_str).collect();
        let y_max = r.initial_lambda.iter().chain(&r.terminal_lambda).fold(0.0_f64, |m, &x| m.max(x));
        let title = format!(
            "{}: manufacturing shares (G {:.3} -> {:.3})",
            r.scenario, r.initial_gini, r.terminal_gini
        );
        let svg = bar_chart(
            &title,
            "share of workers",
            &ids,
            &[
                Series {
                    label: "initial",
                    color: "#9ecae1",
                    values: r.initial_lambda.clone(),
                },
                Series {
                    label: "terminal",
                    color: "#08519c",
                    values: r.terminal_lambda.clone(),
                },
            ],
            y_max,
        );
        written.push(write(dir.join(format!("lambda_{}.svg", file_stem(&r.scenario))), &svg)?);
    }

    let table = report.gini_table();
    let names: Vec<&str> = table.iter().map(|row| row.scenario.as_str()).collect();
    let pick = |f: fn(&super::GiniRow) -> Option<f64>| table.iter().map(|row| f(row).unwrap_or(f64::NAN)).collect();
    let svg = bar_chart(
        "Gini index by scenario",
        "Gini",
        &names,
        &[
            Series {
                label: "initial",
                color: "#bdbdbd",
                values: pick(|r| r.initial_gini),
            },
            Series {
                label: "terminal",
                color: "#a50f15",
                values: pick(|r| r.terminal_gini),
            },
        ],
        1.0,
    );
    written.push(write(dir.join("gini_by_scenario.svg"), &svg)?);
    Ok(written)
}
