//! Minimal static SVG charts.

use std::fmt::Write as _;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// One value per category; `None` leaves a gap.
    pub values: Vec<Option<f64>>,
    /// Optional symmetric error bar per category.
    pub errors: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub categories: Vec<String>,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

struct Frame {
    lo: f64,
    hi: f64,
    step: f64,
}

impl Frame {
    fn new(chart: &Chart, include_zero: bool) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &chart.series {
            for (i, v) in s.values.iter().enumerate() {
                let Some(v) = v.filter(|v| v.is_finite()) else { continue };
                let e = s
                    .errors
                    .as_ref()
                    .and_then(|e| e[i])
                    .filter(|e| e.is_finite())
                    .unwrap_or(0.0);
                lo = lo.min(v - e);
                hi = hi.max(v + e);
            }
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if include_zero {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let step = nice_step(hi - lo);
        Self {
            lo: (lo / step).floor() * step,
            hi: (hi / step).ceil() * step,
            step,
        }
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - TOP - BOTTOM;
        TOP + h * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

fn header(out: &mut String, chart: &Chart, frame: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(&chart.title)
    );
    let mut v = frame.lo;
    while v <= frame.hi + frame.step * 1e-6 {
        let y = frame.y(v);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            WIDTH - RIGHT,
            LEFT - 6.0,
            y + 4.0,
            format_tick(v, frame.step)
        );
        v += frame.step;
    }
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        HEIGHT - BOTTOM,
        HEIGHT - BOTTOM,
        WIDTH - RIGHT,
        HEIGHT - BOTTOM
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 14.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(&chart.y_label)
    );
}

fn format_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{:.*}", decimals, if v.abs() < step * 1e-9 { 0.0 } else { v })
}

fn legend(out: &mut String, chart: &Chart) {
    for (i, s) in chart.series.iter().enumerate() {
        let y = TOP + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{:.2}" width="12" height="12" fill="{}"/><text x="{}" y="{:.2}">{}</text>"#,
            y,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y + 10.0,
            escape(&s.name)
        );
    }
}

fn category_x(i: usize, n: usize) -> f64 {
    let w = WIDTH - LEFT - RIGHT;
    LEFT + w * (i as f64 + 0.5) / n as f64
}

fn category_labels(out: &mut String, chart: &Chart) {
    let n = chart.categories.len();
    for (i, c) in chart.categories.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            category_x(i, n),
            HEIGHT - BOTTOM + 16.0,
            escape(c)
        );
    }
}

fn error_bar(out: &mut String, x: f64, frame: &Frame, v: f64, e: f64, color: &str) {
    let (y0, y1) = (frame.y(v - e), frame.y(v + e));
    let _ = writeln!(
        out,
        r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="{color}"/><line x1="{:.2}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="{color}"/><line x1="{:.2}" y1="{y1:.2}" x2="{:.2}" y2="{y1:.2}" stroke="{color}"/>"#,
        x - 3.0,
        x + 3.0,
        x - 3.0,
        x + 3.0
    );
}

/// Lines over categorical x positions, with markers and optional error bars.
pub fn line_chart(chart: &Chart) -> String {
    let frame = Frame::new(chart, false);
    let mut out = String::new();
    header(&mut out, chart, &frame);
    category_labels(&mut out, chart);
    let n = chart.categories.len();
    for (si, s) in chart.series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut path = String::new();
        let mut pen_down = false;
        for (i, v) in s.values.iter().enumerate() {
            match v.filter(|v| v.is_finite()) {
                Some(v) => {
                    let _ = write!(
                        path,
                        "{}{:.2},{:.2} ",
                        if pen_down { "L" } else { "M" },
                        category_x(i, n),
                        frame.y(v)
                    );
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.trim_end());
        for (i, v) in s.values.iter().enumerate() {
            let Some(v) = v.filter(|v| v.is_finite()) else { continue };
            let x = category_x(i, n);
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, frame.y(v));
            if let Some(e) = s.errors.as_ref().and_then(|e| e[i]).filter(|e| e.is_finite()) {
                error_bar(&mut out, x, &frame, v, e, color);
            }
        }
    }
    legend(&mut out, chart);
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per category, one bar per series.
pub fn bar_chart(chart: &Chart) -> String {
    let frame = Frame::new(chart, true);
    let mut out = String::new();
    header(&mut out, chart, &frame);
    category_labels(&mut out, chart);
    let n = chart.categories.len();
    let group_w = (WIDTH - LEFT - RIGHT) / n.max(1) as f64 * 0.8;
    let bar_w = group_w / chart.series.len().max(1) as f64;
    let zero = frame.y(0.0);
    for (si, s) in chart.series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        for (i, v) in s.values.iter().enumerate() {
            let Some(v) = v.filter(|v| v.is_finite()) else { continue };
            let x = category_x(i, n) - group_w / 2.0 + bar_w * si as f64;
            let y = frame.y(v);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                y.min(zero),
                bar_w * 0.9,
                (zero - y).abs()
            );
        }
    }
    legend(&mut out, chart);
    out.push_str("</svg>\n");
    out
}
