//! Minimal deterministic SVG charts: lines, markers, a heat map layer,
//! linear or log axes and a legend.
//!
//! Output depends only on the chart contents, so identical inputs give
//! byte-identical files.

use std::fmt::Write;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    Circle,
    Square,
    Triangle,
    Cross,
}

impl Marker {
    pub fn nth(k: usize) -> Marker {
        [Marker::Circle, Marker::Square, Marker::Triangle, Marker::Cross][k % 4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points(Marker),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub style: Style,
}

impl Series {
    pub fn line(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            xs,
            ys,
            style: Style::Line,
        }
    }

    pub fn points(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>, marker: Marker) -> Self {
        Series {
            label: label.into(),
            xs,
            ys,
            style: Style::Points(marker),
        }
    }
}

/// Counts on a rectangular grid; `counts[i][j]` covers
/// `[x_edges[i], x_edges[i+1]] x [y_edges[j], y_edges[j+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub counts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_log: bool,
    pub y_log: bool,
    pub width: f64,
    pub height: f64,
    pub heat: Option<HeatMap>,
    pub series: Vec<Series>,
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_log: false,
            y_log: false,
            width: 640.0,
            height: 440.0,
            heat: None,
            series: Vec::new(),
        }
    }

    pub fn log_x(mut self, on: bool) -> Self {
        self.x_log = on;
        self
    }

    pub fn log_y(mut self, on: bool) -> Self {
        self.y_log = on;
        self
    }

    pub fn with_series(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn with_heat(mut self, h: HeatMap) -> Self {
        self.heat = Some(h);
        self
    }
}

const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return if log {
                Axis { lo: 1.0, hi: 10.0, log }
            } else {
                Axis { lo: 0.0, hi: 1.0, log }
            };
        }
        if log {
            let (a, b) = (lo.log10().floor(), hi.log10().ceil());
            let b = if b <= a { a + 1.0 } else { b };
            return Axis {
                lo: 10f64.powf(a),
                hi: 10f64.powf(b),
                log,
            };
        }
        if hi <= lo {
            let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
            return Axis {
                lo: lo - pad,
                hi: hi + pad,
                log,
            };
        }
        let step = nice_step((hi - lo) / 5.0);
        Axis {
            lo: (lo / step).floor() * step,
            hi: (hi / step).ceil() * step,
            log,
        }
    }

    fn frac(&self, v: f64) -> f64 {
        if self.log {
            (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.log10().round() as i32, self.hi.log10().round() as i32);
            let every = ((b - a) as f64 / 6.0).ceil().max(1.0) as i32;
            return (a..=b).filter(|k| (k - a) % every == 0).map(|k| 10f64.powi(k)).collect();
        }
        let step = nice_step((self.hi - self.lo) / 5.0);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step + 1e-9).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        return format!("{v:.0e}");
    }
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the chart as a standalone SVG document.
pub fn render(chart: &Chart) -> String {
    let (w, h) = (chart.width, chart.height);
    let (pw, ph) = (w - LEFT - RIGHT, h - TOP - BOTTOM);
    let mut xs: Vec<f64> = chart.series.iter().flat_map(|s| s.xs.iter().copied()).collect();
    let mut ys: Vec<f64> = chart.series.iter().flat_map(|s| s.ys.iter().copied()).collect();
    if let Some(hm) = &chart.heat {
        xs.extend([hm.x_edges[0], *hm.x_edges.last().unwrap()]);
        ys.extend([hm.y_edges[0], *hm.y_edges.last().unwrap()]);
    }
    let ax = Axis::fit(xs.into_iter(), chart.x_log);
    let ay = Axis::fit(ys.into_iter(), chart.y_log);
    let px = |x: f64| LEFT + ax.frac(x) * pw;
    let py = |y: f64| TOP + (1.0 - ay.frac(y)) * ph;
    let visible = |x: f64, y: f64| x.is_finite() && y.is_finite() && (!ax.log || x > 0.0) && (!ay.log || y > 0.0);

    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(o, r#"<defs><clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath></defs>"#);

    if let Some(hm) = &chart.heat {
        let peak = hm.counts.iter().flatten().cloned().fold(0.0, f64::max);
        let _ = writeln!(o, r#"<g clip-path="url(#plot)">"#);
        for (i, col) in hm.counts.iter().enumerate() {
            for (j, &c) in col.iter().enumerate() {
                if c <= 0.0 || peak <= 0.0 {
                    continue;
                }
                let (x0, x1) = (px(hm.x_edges[i]), px(hm.x_edges[i + 1]));
                let (y0, y1) = (py(hm.y_edges[j + 1]), py(hm.y_edges[j]));
                // log shading so sparse branches stay visible
                let t = (1.0 + c).ln() / (1.0 + peak).ln();
                let shade = (235.0 - 200.0 * t).round() as u8;
                let _ = writeln!(
                    o,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({shade},{shade},255)"/>"#,
                    x0,
                    y0,
                    (x1 - x0).max(0.0),
                    (y1 - y0).max(0.0)
                );
            }
        }
        let _ = writeln!(o, "</g>");
    }

    // axes and ticks
    let _ = writeln!(o, r#"<g stroke="black" fill="none"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></g>"#);
    for t in ax.ticks() {
        let x = px(t);
        let _ = writeln!(o, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(o, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, label(t));
    }
    for t in ay.ticks() {
        let y = py(t);
        let _ = writeln!(o, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(o, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, label(t));
    }
    let _ = writeln!(o, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, h - 12.0, esc(&chart.x_label));
    let _ = writeln!(
        o,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        esc(&chart.y_label)
    );
    let _ = writeln!(o, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(&chart.title));

    let _ = writeln!(o, r#"<g clip-path="url(#plot)">"#);
    for (k, s) in chart.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        match s.style {
            Style::Line => {
                // break the polyline at points that cannot be drawn
                let mut run = Vec::new();
                let flush = |run: &mut Vec<String>, o: &mut String| {
                    if run.len() > 1 {
                        let _ = writeln!(o, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, run.join(" "));
                    }
                    run.clear();
                };
                for (&x, &y) in s.xs.iter().zip(&s.ys) {
                    if visible(x, y) {
                        run.push(format!("{:.2},{:.2}", px(x), py(y)));
                    } else {
                        flush(&mut run, &mut o);
                    }
                }
                flush(&mut run, &mut o);
            }
            Style::Points(m) => {
                for (&x, &y) in s.xs.iter().zip(&s.ys) {
                    if visible(x, y) {
                        marker(&mut o, m, px(x), py(y), color);
                    }
                }
            }
        }
    }
    let _ = writeln!(o, "</g>");

    // legend
    let labelled: Vec<(usize, &Series)> = chart.series.iter().enumerate().filter(|(_, s)| !s.label.is_empty() && !s.xs.is_empty()).collect();
    if !labelled.is_empty() {
        let lx = LEFT + pw - 150.0;
        let _ = writeln!(
            o,
            r##"<rect x="{}" y="{}" width="145" height="{}" fill="white" fill-opacity="0.85" stroke="#999"/>"##,
            lx,
            TOP + 5.0,
            labelled.len() as f64 * 18.0 + 8.0
        );
        for (row, (k, s)) in labelled.into_iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let y = TOP + 18.0 + row as f64 * 18.0;
            match s.style {
                Style::Line => {
                    let _ = writeln!(o, r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="1.5"/>"#, lx + 6.0, lx + 26.0);
                }
                Style::Points(m) => marker(&mut o, m, lx + 16.0, y, color),
            }
            let _ = writeln!(o, r#"<text x="{}" y="{}">{}</text>"#, lx + 32.0, y + 4.0, esc(&s.label));
        }
    }
    o.push_str("</svg>\n");
    o
}

fn marker(o: &mut String, m: Marker, x: f64, y: f64, color: &str) {
    let r = 3.0;
    let _ = match m {
        Marker::Circle => writeln!(o, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{color}"/>"#),
        Marker::Square => writeln!(
            o,
            r#"<rect x="{:.2}" y="{:.2}" width="{}" height="{}" fill="{color}"/>"#,
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        Marker::Triangle => writeln!(
            o,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y - r,
            x - r,
            y + r,
            x + r,
            y + r
        ),
        Marker::Cross => writeln!(
            o,
            r#"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{color}" stroke-width="1.5"/>"#,
            x - r,
            y - r,
            x + r,
            y + r,
            x - r,
            y + r,
            x + r,
            y - r
        ),
    };
}
