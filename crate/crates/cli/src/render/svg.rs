//! Minimal SVG canvas with plot panels.

use std::fmt::Write;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Fixed two-decimal coordinates keep output bytes stable.
pub fn f(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

pub fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e6).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".into()
        } else {
            s.to_string()
        }
    }
}

pub struct Svg {
    pub width: f64,
    pub height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg { width, height, body: String::new() }
    }

    pub fn raw(&mut self, s: &str) {
        self.body.push_str(s);
        self.body.push('\n');
    }

    pub fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="{anchor}" font-size="{}">{}</text>"#,
            f(x),
            f(y),
            f(size),
            escape(s)
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}"/>"#,
            f(x1),
            f(y1),
            f(x2),
            f(y2),
            f(width)
        );
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, attrs: &str) {
        let _ = writeln!(self.body, r#"<rect x="{}" y="{}" width="{}" height="{}" {attrs}/>"#, f(x), f(y), f(w), f(h));
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, attrs: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{}" cy="{}" r="{}" {attrs}/>"#, f(x), f(y), f(r));
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], attrs: &str) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", f(*x), f(*y))).collect();
        let _ = writeln!(self.body, r#"<polyline points="{}" fill="none" {attrs}/>"#, p.join(" "));
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], attrs: &str) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", f(*x), f(*y))).collect();
        let _ = writeln!(self.body, r#"<polygon points="{}" {attrs}/>"#, p.join(" "));
    }

    pub fn finish(self) -> String {
        format!(
            concat!(
                r#"<?xml version="1.0" encoding="UTF-8"?>"#,
                "\n",
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
                "\n",
                r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#,
                "\n{body}</svg>\n"
            ),
            w = f(self.width),
            h = f(self.height),
            body = self.body
        )
    }
}

/// Roughly `n` round tick positions covering [lo, hi].
pub fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / n.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= n as f64).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Padded data range; a degenerate range is widened.
pub fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let w = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - w, hi + w)
    }
}

/// A rectangle of the canvas with data ranges on both axes.
pub struct Panel {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub xr: (f64, f64),
    pub yr: (f64, f64),
}

impl Panel {
    pub fn px(&self, v: f64) -> f64 {
        self.x + (v - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    pub fn py(&self, v: f64) -> f64 {
        self.y + self.h - (v - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    /// Frame, ticks and labels; categorical x axes draw their own ticks.
    pub fn axes(&self, svg: &mut Svg, title: &str, xlabel: &str, ylabel: &str, x_ticks: bool) {
        svg.rect(self.x, self.y, self.w, self.h, r##"fill="none" stroke="#333333" stroke-width="1""##);
        svg.text(self.x + self.w / 2.0, self.y - 8.0, "middle", 13.0, title);
        svg.text(self.x + self.w / 2.0, self.y + self.h + 34.0, "middle", 11.0, xlabel);
        svg.raw(&format!(
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="11.00" transform="rotate(-90 {} {})">{}</text>"#,
            f(self.x - 48.0),
            f(self.y + self.h / 2.0),
            f(self.x - 48.0),
            f(self.y + self.h / 2.0),
            escape(ylabel)
        ));
        if x_ticks {
            for t in nice_ticks(self.xr.0, self.xr.1, 6) {
                let x = self.px(t);
                svg.line(x, self.y + self.h, x, self.y + self.h + 4.0, "#333333", 1.0);
                svg.text(x, self.y + self.h + 16.0, "middle", 10.0, &tick_label(t));
            }
        }
        for t in nice_ticks(self.yr.0, self.yr.1, 5) {
            let y = self.py(t);
            svg.line(self.x - 4.0, y, self.x, y, "#333333", 1.0);
            svg.text(self.x - 6.0, y + 3.5, "end", 10.0, &tick_label(t));
        }
    }

    pub fn no_data(&self, svg: &mut Svg) {
        svg.text(self.x + self.w / 2.0, self.y + self.h / 2.0, "middle", 14.0, "no data");
    }
}
