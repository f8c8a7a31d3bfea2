//! Self-contained SVG figures: histograms with a density overlay, overlap
//! profiles, line charts and small-multiple bar grids.

use std::fmt::Write;

use svlens_core::rmt::{Histogram, MpModel};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Roughly `n` round tick values covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return vec![lo];
    }
    let raw = (hi - lo) / n.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, style: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" {style}/>"#,
            num(x),
            num(y),
            num(w.max(0.0)),
            num(h.max(0.0))
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" {style}/>"#,
            num(x1),
            num(y1),
            num(x2),
            num(y2)
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], style: &str) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", num(*x), num(*y))).collect();
        let _ = writeln!(self.body, r#"<polyline points="{}" fill="none" {style}/>"#, p.join(" "));
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}"/>"#, num(x), num(y), num(r));
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str, attrs: &str) {
        let _ = writeln!(self.body, r#"<text x="{}" y="{}" {attrs}>{}</text>"#, num(x), num(y), esc(s));
    }

    pub fn finish(self) -> String {
        format!(
            concat!(
                r#"<?xml version="1.0" encoding="UTF-8"?>"#,
                "\n",
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
                "\n",
                r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#,
                "\n{body}</svg>\n"
            ),
            w = num(self.width),
            h = num(self.height),
            body = self.body
        )
    }
}

/// Linear data-to-pixel mapping for one plot panel.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Frame {
    pub fn px(&self, x: f64) -> f64 {
        let (a, b) = self.x;
        let t = if b > a { (x - a) / (b - a) } else { 0.5 };
        self.left + t * self.width
    }

    pub fn py(&self, y: f64) -> f64 {
        let (a, b) = self.y;
        let t = if b > a { (y - a) / (b - a) } else { 0.5 };
        self.top + self.height * (1.0 - t)
    }

    pub fn axes(&self, svg: &mut Svg, xlabel: &str, ylabel: &str) {
        let axis = r##"stroke="#333" stroke-width="1""##;
        let bottom = self.top + self.height;
        svg.line(self.left, bottom, self.left + self.width, bottom, axis);
        svg.line(self.left, self.top, self.left, bottom, axis);
        for t in ticks(self.x.0, self.x.1, 6) {
            let x = self.px(t);
            svg.line(x, bottom, x, bottom + 4.0, axis);
            svg.text(x, bottom + 15.0, &label(t), r#"text-anchor="middle""#);
        }
        for t in ticks(self.y.0, self.y.1, 5) {
            let y = self.py(t);
            svg.line(self.left - 4.0, y, self.left, y, axis);
            svg.text(self.left - 6.0, y + 4.0, &label(t), r#"text-anchor="end""#);
        }
        svg.text(self.left + self.width / 2.0, bottom + 32.0, xlabel, r#"text-anchor="middle""#);
        let (lx, ly) = (self.left - 44.0, self.top + self.height / 2.0);
        svg.text(
            lx,
            ly,
            ylabel,
            &format!(r#"text-anchor="middle" transform="rotate(-90 {} {})""#, num(lx), num(ly)),
        );
    }
}

fn title(svg: &mut Svg, x: f64, s: &str) {
    svg.text(x, 20.0, s, r#"text-anchor="middle" font-size="13" font-weight="bold""#);
}

fn legend(svg: &mut Svg, x: f64, y: f64, entries: &[(&str, &str)]) {
    for (i, (c, l)) in entries.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        svg.rect(x, yy - 8.0, 12.0, 8.0, &format!(r#"fill="{c}""#));
        svg.text(x + 16.0, yy, l, "");
    }
}

/// Density-normalized histogram with the fitted law as a 256-point polyline
/// and dashed markers at the bulk edges.
pub fn histogram_svg(heading: &str, hist: &Histogram, mp: &MpModel) -> String {
    let (w, h) = (640.0, 400.0);
    let mut svg = Svg::new(w, h);
    title(&mut svg, w / 2.0, heading);
    let total = hist.total().max(1) as f64;
    let bw = hist.bin_width();
    let dens: Vec<f64> = hist.counts.iter().map(|&c| c as f64 / (total * bw)).collect();
    let (x0, x1) = (hist.edges[0], *hist.edges.last().expect("edges"));
    let curve: Vec<(f64, f64)> = (0..256)
        .map(|i| {
            let x = x0 + (x1 - x0) * i as f64 / 255.0;
            (x, mp.density(x))
        })
        .collect();
    let ymax = dens.iter().chain(curve.iter().map(|(_, y)| y)).cloned().fold(0.0, f64::max);
    let f = Frame {
        left: 70.0,
        top: 36.0,
        width: w - 100.0,
        height: h - 90.0,
        x: (x0, x1),
        y: (0.0, if ymax > 0.0 { ymax * 1.05 } else { 1.0 }),
    };
    for (i, d) in dens.iter().enumerate() {
        let xa = f.px(hist.edges[i]);
        let xb = f.px(hist.edges[i + 1]);
        let y = f.py(*d);
        svg.rect(xa, y, xb - xa, f.py(0.0) - y, r##"fill="#9ecae1" stroke="#6baed6" stroke-width="0.5""##);
    }
    let pts: Vec<(f64, f64)> = curve.iter().map(|&(x, y)| (f.px(x), f.py(y))).collect();
    svg.polyline(&pts, r##"stroke="#d62728" stroke-width="1.5""##);
    for edge in [mp.nu_minus, mp.nu_plus] {
        let x = f.px(edge);
        svg.line(x, f.top, x, f.top + f.height, r##"stroke="#555" stroke-dasharray="4 3""##);
    }
    f.axes(&mut svg, "singular value", "density");
    legend(
        &mut svg,
        w - 200.0,
        50.0,
        &[("#9ecae1", "empirical"), ("#d62728", "Marchenko-Pastur fit")],
    );
    svg.finish()
}

/// `O_k` against rank `k`, with ranks outside the bulk shaded and the flag
/// threshold dashed.
pub fn overlap_svg(heading: &str, overlaps: &[f64], outside: &[bool], flag: f64) -> String {
    let (w, h) = (640.0, 400.0);
    let mut svg = Svg::new(w, h);
    title(&mut svg, w / 2.0, heading);
    let k = overlaps.len().max(1) as f64;
    let f = Frame {
        left: 70.0,
        top: 36.0,
        width: w - 100.0,
        height: h - 90.0,
        x: (0.5, k + 0.5),
        y: (0.0, 1.0),
    };
    for (i, &o) in outside.iter().enumerate() {
        if o {
            let r = (i + 1) as f64;
            let (xa, xb) = (f.px(r - 0.5), f.px(r + 0.5));
            svg.rect(xa, f.top, xb - xa, f.height, r##"fill="#fdd0a2" fill-opacity="0.7""##);
        }
    }
    let y = f.py(flag);
    svg.line(f.left, y, f.left + f.width, y, r##"stroke="#555" stroke-dasharray="4 3""##);
    let pts: Vec<(f64, f64)> = overlaps
        .iter()
        .enumerate()
        .map(|(i, &o)| (f.px((i + 1) as f64), f.py(o)))
        .collect();
    svg.polyline(&pts, r##"stroke="#1f77b4" stroke-width="1""##);
    if pts.len() <= 128 {
        for &(x, y) in &pts {
            svg.circle(x, y, 2.0, "#1f77b4");
        }
    }
    f.axes(&mut svg, "rank k", "overlap O_k");
    legend(
        &mut svg,
        w - 220.0,
        50.0,
        &[("#1f77b4", "max overlap"), ("#fdd0a2", "outside bulk")],
    );
    svg.finish()
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with one polyline per series.
pub fn lines_svg(heading: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 400.0);
    let mut svg = Svg::new(w, h);
    title(&mut svg, w / 2.0, heading);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 0.5 };
    let f = Frame {
        left: 70.0,
        top: 36.0,
        width: w - 100.0,
        height: h - 90.0,
        x: (x0, x1),
        y: (y0.min(0.0), y1 + pad),
    };
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s.points.iter().map(|&(x, y)| (f.px(x), f.py(y))).collect();
        svg.polyline(&pts, &format!(r#"stroke="{}" stroke-width="1.5""#, color(i)));
        for &(x, y) in &pts {
            svg.circle(x, y, 2.5, color(i));
        }
    }
    f.axes(&mut svg, xlabel, ylabel);
    let entries: Vec<(&str, &str)> = series.iter().enumerate().map(|(i, s)| (color(i), s.label.as_str())).collect();
    legend(&mut svg, w - 220.0, 50.0, &entries);
    svg.finish()
}

pub struct Panel {
    pub label: String,
    /// One bar per category, in order.
    pub values: Vec<f64>,
}

/// Small multiples: one bar chart per panel sharing category labels, each
/// with its own value axis.
pub fn grid_svg(heading: &str, categories: &[String], ylabel: &str, panels: &[Panel]) -> String {
    let cols = panels.len().clamp(1, 4);
    let rows = panels.len().div_ceil(cols).max(1);
    let (pw, ph) = (300.0, 230.0);
    let (w, h) = (cols as f64 * pw + 20.0, rows as f64 * ph + 40.0);
    let mut svg = Svg::new(w, h);
    title(&mut svg, w / 2.0, heading);
    for (i, p) in panels.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        let (ox, oy) = (10.0 + c as f64 * pw, 30.0 + r as f64 * ph);
        let lo = p.values.iter().cloned().fold(0.0, f64::min);
        let hi = p.values.iter().cloned().fold(0.0, f64::max);
        let f = Frame {
            left: ox + 62.0,
            top: oy + 24.0,
            width: pw - 80.0,
            height: ph - 78.0,
            x: (0.5, categories.len() as f64 + 0.5),
            y: (lo, if hi > lo { hi } else { lo + 1.0 }),
        };
        svg.text(f.left + f.width / 2.0, oy + 14.0, &p.label, r#"text-anchor="middle" font-weight="bold""#);
        let base = f.py(0.0);
        for (j, &v) in p.values.iter().enumerate() {
            let x = (j + 1) as f64;
            let (xa, xb) = (f.px(x - 0.35), f.px(x + 0.35));
            let y = f.py(v);
            svg.rect(xa, y.min(base), xb - xa, (base - y).abs(), &format!(r#"fill="{}""#, color(i)));
        }
        let axis = r##"stroke="#333" stroke-width="1""##;
        let bottom = f.top + f.height;
        svg.line(f.left, bottom, f.left + f.width, bottom, axis);
        svg.line(f.left, f.top, f.left, bottom, axis);
        for (j, cat) in categories.iter().enumerate() {
            svg.text(f.px((j + 1) as f64), bottom + 13.0, cat, r#"text-anchor="middle" font-size="9""#);
        }
        for t in ticks(f.y.0, f.y.1, 4) {
            let y = f.py(t);
            svg.line(f.left - 3.0, y, f.left, y, axis);
            svg.text(f.left - 5.0, y + 3.0, &label(t), r#"text-anchor="end" font-size="9""#);
        }
        let (lx, ly) = (ox + 14.0, f.top + f.height / 2.0);
        svg.text(
            lx,
            ly,
            ylabel,
            &format!(r#"text-anchor="middle" font-size="9" transform="rotate(-90 {} {})""#, num(lx), num(ly)),
        );
    }
    svg.finish()
}
