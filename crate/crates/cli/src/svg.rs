//! Minimal SVG line/point charts.

use std::fmt::Write;

pub const GREY: &str = "#999999";
pub const BLUE: &str = "#2c6fbb";
pub const RED: &str = "#c0392b";
pub const BAND: &str = "#b8cfe8";

pub struct Panel {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub log_x: bool,
    pub log_y: bool,
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    body: String,
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Panel {
    pub fn new(title: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        Panel {
            x,
            y,
            log_x: false,
            log_y: false,
            width: 420.0,
            height: 320.0,
            margin: 56.0,
            title: title.into(),
            x_label: String::new(),
            y_label: String::new(),
            body: String::new(),
        }
    }

    pub fn labels(mut self, x: &str, y: &str) -> Self {
        self.x_label = x.into();
        self.y_label = y.into();
        self
    }

    pub fn log_axes(mut self, log_x: bool, log_y: bool) -> Self {
        self.log_x = log_x;
        self.log_y = log_y;
        self
    }

    fn tx(&self, v: f64) -> f64 {
        let (a, b, v) = if self.log_x { (self.x.0.ln(), self.x.1.ln(), v.ln()) } else { (self.x.0, self.x.1, v) };
        self.margin + (v - a) / (b - a) * (self.width - 1.5 * self.margin)
    }

    fn ty(&self, v: f64) -> f64 {
        let (a, b, v) = if self.log_y { (self.y.0.ln(), self.y.1.ln(), v.ln()) } else { (self.y.0, self.y.1, v) };
        self.height - self.margin - (v - a) / (b - a) * (self.height - 1.5 * self.margin)
    }

    fn ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
        if log {
            let (a, b) = (lo.log10().floor() as i32, hi.log10().ceil() as i32);
            (a..=b).map(|e| 10f64.powi(e)).filter(|v| *v >= lo * 0.999 && *v <= hi * 1.001).collect()
        } else {
            (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
        }
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.tx(x), self.ty(y))).collect();
        let dash = if dashed { " stroke-dasharray=\"5,4\"" } else { "" };
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"{dash}/>",
            coords.join(" ")
        );
    }

    /// Step function through `pts`, holding each value until the next x.
    pub fn steps(&mut self, pts: &[(f64, f64)], color: &str) {
        let mut out = Vec::with_capacity(2 * pts.len());
        for (i, &(x, y)) in pts.iter().enumerate() {
            if i > 0 {
                out.push((x, pts[i - 1].1));
            }
            out.push((x, y));
        }
        self.polyline(&out, color, false);
    }

    /// Filled region between `lower` and `upper` over shared x values.
    pub fn band(&mut self, x: &[f64], lower: &[f64], upper: &[f64], color: &str) {
        if x.is_empty() {
            return;
        }
        let mut coords: Vec<String> = x.iter().zip(upper).map(|(&a, &b)| format!("{:.2},{:.2}", self.tx(a), self.ty(b))).collect();
        coords.extend(x.iter().zip(lower).rev().map(|(&a, &b)| format!("{:.2},{:.2}", self.tx(a), self.ty(b))));
        let _ = writeln!(self.body, "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.6\" stroke=\"none\"/>", coords.join(" "));
    }

    pub fn point_with_interval(&mut self, x: f64, y: f64, lo: f64, hi: f64, color: &str) {
        let (px, py) = (self.tx(x), self.ty(y));
        let _ = writeln!(
            self.body,
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"4\" fill=\"{color}\"/>",
            self.ty(lo),
            self.ty(hi)
        );
    }

    pub fn vline(&mut self, x: f64, color: &str) {
        let px = self.tx(x);
        let _ = writeln!(
            self.body,
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"1.2\"/>",
            self.ty(self.y.0),
            self.ty(self.y.1)
        );
    }

    pub fn hline(&mut self, y: f64, color: &str) {
        let py = self.ty(y);
        let _ = writeln!(
            self.body,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" stroke=\"{color}\" stroke-width=\"1.2\" stroke-dasharray=\"5,4\"/>",
            self.tx(self.x.0),
            self.tx(self.x.1)
        );
    }

    /// Bars rising from the bottom axis, scaled so the tallest has height `frac` of the y range.
    pub fn histogram_strip(&mut self, bins: &[(f64, f64, usize)], frac: f64, color: &str) {
        let max = bins.iter().map(|b| b.2).max().unwrap_or(0).max(1) as f64;
        let base = self.ty(self.y.0);
        let full = base - self.ty(self.y.1);
        for &(lo, hi, count) in bins {
            let h = full * frac * count as f64 / max;
            let _ = writeln!(
                self.body,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{color}\" fill-opacity=\"0.5\"/>",
                self.tx(lo),
                base - h,
                self.tx(hi) - self.tx(lo)
            );
        }
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str) {
        let _ = writeln!(self.body, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>", self.tx(x), self.ty(y), escape(s));
    }

    fn frame(&self) -> String {
        let mut s = String::new();
        let (x0, x1, y0, y1) = (self.tx(self.x.0), self.tx(self.x.1), self.ty(self.y.0), self.ty(self.y.1));
        let _ = writeln!(s, "<rect x=\"{x0:.2}\" y=\"{y1:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#333\"/>", x1 - x0, y0 - y1);
        for v in Self::ticks(self.x.0, self.x.1, self.log_x) {
            let px = self.tx(v);
            let _ = writeln!(
                s,
                "<line x1=\"{px:.2}\" y1=\"{y0:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#333\"/><text x=\"{px:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
                y0 + 4.0,
                y0 + 16.0,
                fmt_tick(v)
            );
        }
        for v in Self::ticks(self.y.0, self.y.1, self.log_y) {
            let py = self.ty(v);
            let _ = writeln!(
                s,
                "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{x0:.2}\" y2=\"{py:.2}\" stroke=\"#333\"/><text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
                x0 - 4.0,
                x0 - 6.0,
                py + 3.0,
                fmt_tick(v)
            );
        }
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"20\" font-size=\"13\" text-anchor=\"middle\">{}</text>", (x0 + x1) / 2.0, escape(&self.title));
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            (x0 + x1) / 2.0,
            self.height - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            "<text x=\"14\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );
        s
    }

    fn group(&self, dx: f64) -> String {
        format!("<g transform=\"translate({dx:.2},0)\">\n{}{}</g>\n", self.frame(), self.body)
    }
}

/// Places panels side by side in one document.
pub fn document(panels: &[Panel]) -> String {
    let width: f64 = panels.iter().map(|p| p.width).sum();
    let height = panels.iter().map(|p| p.height).fold(0.0, f64::max);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let mut dx = 0.0;
    for p in panels {
        s.push_str(&p.group(dx));
        dx += p.width;
    }
    s.push_str("</svg>\n");
    s
}
