//! Minimal SVG 1.1 line plots of sweep records.

use std::f64::consts::PI;
use std::fmt::Write as _;

use bellnav::indicators::operator_name;
use bellnav::Record;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 220.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 44.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

pub struct Panel {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick positions with a 1-2-5 step covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5f64.max(lo.abs() * 0.05) };
    (lo - pad, hi + pad)
}

/// Renders stacked panels sharing the x axis. `markers` are drawn as
/// vertical dashed lines in every panel.
pub fn render(title: &str, x_label: &str, panels: &[Panel], markers: &[f64]) -> String {
    let height = TOP + panels.len() as f64 * (PANEL_HEIGHT + BOTTOM) + 10.0;
    let (x_lo, x_hi) = {
        let (lo, hi) = range(panels.iter().flat_map(|p| p.series.iter()).flat_map(|s| s.points.iter().map(|p| p.0)));
        let pad = (hi - lo) / 1.1 * 0.05;
        (lo + pad, hi - pad)
    };
    let plot_w = WIDTH - LEFT - RIGHT;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo).max(1e-12) * plot_w;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    for (pi, panel) in panels.iter().enumerate() {
        let top = TOP + pi as f64 * (PANEL_HEIGHT + BOTTOM);
        let bottom = top + PANEL_HEIGHT;
        let (y_lo, y_hi) = range(panel.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let sy = |y: f64| bottom - (y - y_lo) / (y_hi - y_lo) * PANEL_HEIGHT;

        let _ = writeln!(out, r#"<g>"#);
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{top}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="black"/>"#
        );
        for t in ticks(x_lo, x_hi) {
            let x = sx(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{bottom}" stroke="#e0e0e0"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                bottom + 14.0,
                fmt_tick(t)
            );
        }
        for t in ticks(y_lo, y_hi) {
            let y = sy(t);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + plot_w,
                LEFT - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        for &m in markers {
            if m >= x_lo && m <= x_hi {
                let x = sx(m);
                let _ = writeln!(
                    out,
                    r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{bottom}" stroke="#555555" stroke-dasharray="5,4"/>"##
                );
            }
        }
        for (si, s) in panel.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let dash = if s.dashed { r#" stroke-dasharray="6,3""# } else { "" };
            // NaN points split the curve.
            for run in s.points.split(|p| !p.0.is_finite() || !p.1.is_finite()) {
                if run.is_empty() {
                    continue;
                }
                let pts: Vec<String> = run.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                if run.len() == 1 {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#, sx(run[0].0), sy(run[0].1));
                } else {
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                        pts.join(" ")
                    );
                }
            }
            let ly = top + 14.0 + 16.0 * si as f64;
            let lx = LEFT + plot_w + 10.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{LEFT}" y="{:.2}" font-size="12">{}</text>"#,
            top - 6.0,
            escape(&panel.title)
        );
        let cy = (top + bottom) / 2.0;
        let _ = writeln!(
            out,
            r#"<text x="16" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 16 {cy:.2})">{}</text>"#,
            escape(&panel.y_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            bottom + 30.0,
            escape(x_label)
        );
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

fn series(label: &str, records: &[Record], f: impl Fn(&Record) -> f64, dashed: bool) -> Series {
    Series { label: label.into(), points: records.iter().map(|r| (r.h, f(r))).collect(), dashed }
}

/// λ1 and λ2, the gap and the susceptibility against the field.
pub fn indicator_plot(records: &[Record], critical: &[f64]) -> String {
    let panels = [
        Panel {
            title: "Principal eigenvalues (per site)".into(),
            y_label: "|λ|".into(),
            series: vec![
                series("|λ1|", records, |r| r.lambda1, false),
                series("|λ2|", records, |r| r.lambda2, true),
            ],
        },
        Panel {
            title: "Spectral gap".into(),
            y_label: "Δλ".into(),
            series: vec![series("Δλ", records, |r| r.gap, false)],
        },
        Panel {
            title: "Susceptibility".into(),
            y_label: "d|λ1|/dh".into(),
            series: vec![series("d|λ1|/dh", records, |r| r.dlambda_dh, false)],
        },
    ];
    render("Bell transfer spectrum", "h", &panels, critical)
}

/// Polar and azimuthal angles of every operator, in units of π.
pub fn angle_plot(records: &[Record], jumps: &[f64]) -> String {
    let n_ops = records.iter().map(|r| r.operator_angles().len()).max().unwrap_or(0);
    let angle = |k: usize, theta: bool| {
        move |r: &Record| {
            r.operator_angles()
                .get(k)
                .map(|a| if theta { a.theta / PI } else { a.phi / PI })
                .unwrap_or(f64::NAN)
        }
    };
    let make = |theta: bool| -> Vec<Series> {
        (0..n_ops).map(|k| series(&operator_name(k), records, angle(k, theta), k % 2 == 1)).collect()
    };
    let panels = [
        Panel { title: "Polar angles".into(), y_label: "θ / π".into(), series: make(true) },
        Panel { title: "Azimuthal angles".into(), y_label: "φ / π".into(), series: make(false) },
    ];
    render("Optimal measurement angles", "h", &panels, jumps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_steps() {
        let t = ticks(0.0, 1.0);
        assert_eq!(t.len(), 6);
        assert!(t.iter().zip([0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(ticks(0.5, 1.5).len(), 5);
        assert_eq!(ticks(-3.0, 20.0), vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(fmt_tick(-0.0), "0");
        assert_eq!(fmt_tick(0.25), "0.25");
    }

    #[test]
    fn nan_splits_polyline() {
        let panel = Panel {
            title: "t".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "s".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN), (3.0, 1.0), (4.0, 0.0)],
                dashed: false,
            }],
        };
        let svg = render("x < y", "h", &[panel], &[2.0]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("x &lt; y"));
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
