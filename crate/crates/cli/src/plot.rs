//! Self-contained SVG figures from an aggregate table: median gap on a log
//! axis and, with two or more trials, the normalized standard deviation.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::table::AggregateRow;

pub const GAP_LABEL: &str = "C(K)\u{2212}C(K*)";
pub const ITERATION_LABEL: &str = "iteration";
pub const STD_LABEL: &str = "normalized std";

const PANEL_W: f64 = 560.0;
const PANEL_H: f64 = 400.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Style {
    pub color: &'static str,
    pub dash: &'static str,
}

const FALLBACK: [Style; 4] = [
    Style {
        color: "#2ca02c",
        dash: "",
    },
    Style {
        color: "#9467bd",
        dash: "6 3",
    },
    Style {
        color: "#ff7f0e",
        dash: "2 3",
    },
    Style {
        color: "#8c564b",
        dash: "10 3 2 3",
    },
];

/// Styles for the series in order; known estimators keep a fixed look and
/// the rest cycle through a fallback palette.
pub fn series_styles(names: &[&str]) -> Vec<Style> {
    let mut spare = FALLBACK.iter().cycle();
    names
        .iter()
        .map(|name| match *name {
            "cspd" => Style {
                color: "#d62728",
                dash: "",
            },
            "ls" => Style {
                color: "#000000",
                dash: "8 4",
            },
            "multi_epoch" => Style {
                color: "#000000",
                dash: "10 3 2 3",
            },
            "sysid" => Style {
                color: "#1f77b4",
                dash: "2 3",
            },
            _ => *spare.next().expect("cycle is infinite"),
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick spacing from {1, 2, 5} x 10^k giving at most about eight ticks.
fn nice_step(span: f64) -> f64 {
    if span <= 0.0 {
        return 1.0;
    }
    let raw = span / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

struct Panel {
    left: f64,
    top: f64,
    x_max: f64,
    y_lo: f64,
    y_hi: f64,
    log: bool,
}

impl Panel {
    fn width(&self) -> f64 {
        PANEL_W - MARGIN_L - MARGIN_R
    }

    fn height(&self) -> f64 {
        PANEL_H - MARGIN_T - MARGIN_B
    }

    fn px(&self, x: f64) -> f64 {
        self.left + MARGIN_L + x / self.x_max * self.width()
    }

    fn py(&self, y: f64) -> f64 {
        let t = if self.log { y.log10() } else { y };
        self.top + MARGIN_T + (self.y_hi - t) / (self.y_hi - self.y_lo) * self.height()
    }

    fn plottable(&self, y: f64) -> bool {
        y.is_finite() && (!self.log || y > 0.0)
    }

    fn frame(&self, out: &mut String, title: &str, y_label: &str) {
        let (x0, y0) = (self.left + MARGIN_L, self.top + MARGIN_T);
        let (w, h) = (self.width(), self.height());
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.2}" y="{y0:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#444"/>"##
        );
        let step = nice_step(self.x_max);
        let mut t = 0.0;
        while t <= self.x_max + 1e-9 {
            let x = self.px(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"##,
                y0 + h,
                y0 + h + 5.0,
                y0 + h + 20.0
            );
            t += step;
        }
        let ticks: Vec<(f64, String)> = if self.log {
            let decades = (self.y_hi - self.y_lo).round() as i32;
            let every = (decades / 8).max(1);
            (0..=decades)
                .step_by(every as usize)
                .map(|d| {
                    let e = self.y_lo as i32 + d;
                    (10f64.powi(e), format!("1e{e}"))
                })
                .collect()
        } else {
            let step = nice_step(self.y_hi - self.y_lo);
            let mut v = Vec::new();
            let mut t = self.y_lo;
            while t <= self.y_hi + 1e-12 {
                v.push((t, format!("{}", (t / step).round() * step)));
                t += step;
            }
            v
        };
        for (value, label) in ticks {
            let y = self.py(value);
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
                x0 - 5.0,
                x0 - 8.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{ITERATION_LABEL}</text>"#,
            x0 + w / 2.0,
            y0 + h + 42.0
        );
        let (lx, ly) = (self.left + 18.0, y0 + h / 2.0);
        let _ = writeln!(
            out,
            r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
            escape(y_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-weight="bold">{}</text>"#,
            x0 + w / 2.0,
            self.top + 24.0,
            escape(title)
        );
    }

    /// Draws the points as polylines broken at values the axis cannot show.
    fn series(&self, out: &mut String, points: &[(f64, f64)], style: Style) {
        let dash = if style.dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{}""#, style.dash)
        };
        let mut segment: Vec<(f64, f64)> = Vec::new();
        let flush = |segment: &mut Vec<(f64, f64)>, out: &mut String| {
            match segment.as_slice() {
                [] => {}
                [(x, y)] => {
                    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{}"/>"#, style.color);
                }
                pts => {
                    let joined: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{}" stroke-width="2"{dash} points="{}"/>"#,
                        style.color,
                        joined.join(" ")
                    );
                }
            }
            segment.clear();
        };
        for &(x, y) in points {
            if self.plottable(y) {
                segment.push((self.px(x), self.py(y)));
            } else {
                flush(&mut segment, out);
            }
        }
        flush(&mut segment, out);
    }
}

fn legend(out: &mut String, left: f64, names: &[&str], styles: &[Style]) {
    let x = left + MARGIN_L + 12.0;
    for (i, (name, style)) in names.iter().zip(styles).enumerate() {
        let y = MARGIN_T + 18.0 + 18.0 * i as f64;
        let dash = if style.dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{}""#, style.dash)
        };
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 36.0,
            style.color,
            x + 42.0,
            y + 4.0,
            escape(name)
        );
    }
}

/// Renders one figure; `source` names the table in error messages.
pub fn render_svg(rows: &[AggregateRow], title: &str, source: &Path) -> Result<String> {
    if rows.is_empty() {
        return Err(CliError::table(source, "result table is empty"));
    }
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.estimator.as_str()) {
            names.push(&r.estimator);
        }
    }
    let styles = series_styles(&names);
    let series = |name: &str, f: fn(&AggregateRow) -> f64| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.estimator == name)
            .map(|r| (r.iteration as f64, f(r)))
            .collect()
    };
    let x_max = rows.iter().map(|r| r.iteration).max().unwrap_or(0).max(1) as f64;

    let positive: Vec<f64> = rows
        .iter()
        .map(|r| r.median_gap)
        .filter(|g| g.is_finite() && *g > 0.0)
        .collect();
    if positive.is_empty() {
        return Err(CliError::table(source, "no positive finite gap to plot"));
    }
    let lo = positive.iter().copied().fold(f64::INFINITY, f64::min).log10().floor();
    let mut hi = positive.iter().copied().fold(0.0, f64::max).log10().ceil();
    if hi <= lo {
        hi = lo + 1.0;
    }
    let with_std = rows.iter().any(|r| r.trials >= 2);
    let width = if with_std { 2.0 * PANEL_W } else { PANEL_W };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let gap_panel = Panel {
        left: 0.0,
        top: 0.0,
        x_max,
        y_lo: lo,
        y_hi: hi,
        log: true,
    };
    gap_panel.frame(&mut out, title, GAP_LABEL);
    for (name, style) in names.iter().zip(&styles) {
        let _ = writeln!(
            out,
            r#"<g class="series" data-panel="gap" data-name="{}">"#,
            escape(name)
        );
        gap_panel.series(&mut out, &series(name, |r| r.median_gap), *style);
        let _ = writeln!(out, "</g>");
    }
    legend(&mut out, 0.0, &names, &styles);

    if with_std {
        let top = rows
            .iter()
            .map(|r| r.normalized_std)
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        let std_panel = Panel {
            left: PANEL_W,
            top: 0.0,
            x_max,
            y_lo: 0.0,
            y_hi: if top > 0.0 {
                (top * 1.05 / nice_step(top)).ceil() * nice_step(top)
            } else {
                1.0
            },
            log: false,
        };
        std_panel.frame(&mut out, "normalized standard deviation", STD_LABEL);
        for (name, style) in names.iter().zip(&styles) {
            let _ = writeln!(
                out,
                r#"<g class="series" data-panel="std" data-name="{}">"#,
                escape(name)
            );
            std_panel.series(&mut out, &series(name, |r| r.normalized_std), *style);
            let _ = writeln!(out, "</g>");
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(names: &[&str], trials: usize) -> Vec<AggregateRow> {
        names
            .iter()
            .flat_map(|n| {
                (0..5).map(move |i| AggregateRow {
                    estimator: n.to_string(),
                    iteration: i,
                    trials,
                    median_gap: 10f64.powi(-(i as i32)),
                    std_gap: 0.1,
                    normalized_std: 0.1 * i as f64,
                })
            })
            .collect()
    }

    #[test]
    fn single_series_single_panel() {
        let svg = render_svg(&rows(&["cspd"], 1), "npg", Path::new("t")).unwrap();
        assert!(svg.contains(">iteration<"));
        assert!(svg.contains(&format!(">{GAP_LABEL}<")));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(!svg.contains(STD_LABEL));
        assert!(svg.contains(">1e-4<") && svg.contains(">1e0<"));
    }

    #[test]
    fn three_series_with_std_panel() {
        let svg = render_svg(&rows(&["cspd", "multi_epoch", "sysid"], 30), "gnm", Path::new("t")).unwrap();
        assert_eq!(svg.matches(r#"data-panel="gap""#).count(), 3);
        assert_eq!(svg.matches(r#"data-panel="std""#).count(), 3);
        assert!(svg.contains(STD_LABEL));
        let styles = series_styles(&["cspd", "multi_epoch", "sysid"]);
        for i in 0..3 {
            for j in 0..i {
                assert_ne!(styles[i], styles[j]);
            }
        }
    }

    #[test]
    fn unknown_names_get_distinct_styles() {
        let names = ["a", "b", "c", "d"];
        let styles = series_styles(&names);
        for i in 0..4 {
            for j in 0..i {
                assert_ne!(styles[i], styles[j]);
            }
        }
    }

    #[test]
    fn nonpositive_points_break_the_line() {
        let mut r = rows(&["ls"], 1);
        r[2].median_gap = 0.0;
        let svg = render_svg(&r, "x", Path::new("t")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn empty_table_is_an_error() {
        assert_eq!(render_svg(&[], "x", Path::new("t")).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn tick_steps() {
        assert_eq!(nice_step(50.0), 10.0);
        assert_eq!(nice_step(8.0), 1.0);
        assert_eq!(nice_step(0.3), 0.05);
    }
}
