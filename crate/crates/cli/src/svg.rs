//! Deterministic SVG phase portraits with optional level curves.

use std::fmt::Write as _;

pub type Segment = [(f64, f64); 2];

const SIZE: f64 = 520.0;
const MARGIN: f64 = 60.0;
const MAX_POINTS: usize = 4000;

#[derive(Debug, Clone, Copy)]
pub struct Window {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Window {
    /// Bounding box of the points, padded by 10% and at least `1e-3` wide.
    pub fn around(points: &[(f64, f64)]) -> Self {
        let span = |sel: fn(&(f64, f64)) -> f64| {
            let lo = points.iter().map(sel).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
            let mid = 0.5 * (lo + hi);
            let half = (0.55 * (hi - lo)).max(1e-3);
            (mid - half, mid + half)
        };
        Window {
            x: span(|p| p.0),
            y: span(|p| p.1),
        }
    }

    fn to_px(self, (x, y): (f64, f64)) -> (f64, f64) {
        let w = SIZE - 2.0 * MARGIN;
        (
            MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * w,
            SIZE - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * w,
        )
    }
}

/// Level set `{f = level}` on an `m x m` grid over the window.
pub fn marching_squares(f: impl Fn(f64, f64) -> f64, win: Window, m: usize, level: f64) -> Vec<Segment> {
    let m = m.max(2);
    let xs: Vec<f64> = (0..m).map(|i| win.x.0 + (win.x.1 - win.x.0) * i as f64 / (m - 1) as f64).collect();
    let ys: Vec<f64> = (0..m).map(|j| win.y.0 + (win.y.1 - win.y.0) * j as f64 / (m - 1) as f64).collect();
    let v: Vec<Vec<f64>> = xs.iter().map(|x| ys.iter().map(|y| f(*x, *y) - level).collect()).collect();
    let mut out = Vec::new();
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            let corners = [
                ((xs[i], ys[j]), v[i][j]),
                ((xs[i + 1], ys[j]), v[i + 1][j]),
                ((xs[i + 1], ys[j + 1]), v[i + 1][j + 1]),
                ((xs[i], ys[j + 1]), v[i][j + 1]),
            ];
            let mut pts = Vec::with_capacity(4);
            for e in 0..4 {
                let (pa, a) = corners[e];
                let (pb, b) = corners[(e + 1) % 4];
                if (a > 0.0) != (b > 0.0) && a.is_finite() && b.is_finite() {
                    let s = a / (a - b);
                    pts.push((pa.0 + s * (pb.0 - pa.0), pa.1 + s * (pb.1 - pa.1)));
                }
            }
            for pair in pts.chunks_exact(2) {
                out.push([pair[0], pair[1]]);
            }
        }
    }
    out
}

pub struct Portrait<'a> {
    pub title: &'a str,
    pub labels: (&'a str, &'a str),
    pub points: &'a [(f64, f64)],
    pub window: Window,
    /// `(level, segments)` pairs drawn under the trajectory.
    pub contours: &'a [(f64, Vec<Segment>)],
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

impl Portrait<'_> {
    pub fn render(&self) -> String {
        let win = self.window;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, SIZE / 2.0, escape(self.title));
        let lo = MARGIN;
        let hi = SIZE - MARGIN;
        let _ = writeln!(
            s,
            r#"<rect x="{lo}" y="{lo}" width="{w}" height="{w}" fill="none" stroke="black"/>"#,
            w = hi - lo
        );
        for k in 0..=4 {
            let fx = win.x.0 + (win.x.1 - win.x.0) * k as f64 / 4.0;
            let fy = win.y.0 + (win.y.1 - win.y.0) * k as f64 / 4.0;
            let (px, _) = win.to_px((fx, win.y.0));
            let (_, py) = win.to_px((win.x.0, fy));
            let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{hi}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, hi + 5.0);
            let _ = writeln!(
                s,
                r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                hi + 18.0,
                fmt_tick(fx)
            );
            let _ = writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{lo}" y2="{py:.2}" stroke="black"/>"#, lo - 5.0);
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                lo - 8.0,
                py + 4.0,
                fmt_tick(fy)
            );
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, SIZE / 2.0, SIZE - 16.0, escape(self.labels.0));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            SIZE / 2.0,
            escape(self.labels.1)
        );
        let _ = writeln!(
            s,
            r#"<defs><clipPath id="plot"><rect x="{lo}" y="{lo}" width="{w}" height="{w}"/></clipPath></defs>"#,
            w = hi - lo
        );
        let _ = writeln!(s, r#"<g clip-path="url(#plot)">"#);
        for (k, (level, segs)) in self.contours.iter().enumerate() {
            if segs.is_empty() {
                continue;
            }
            let mut d = String::new();
            for [a, b] in segs {
                let (ax, ay) = win.to_px(*a);
                let (bx, by) = win.to_px(*b);
                let _ = write!(d, "M{ax:.2} {ay:.2}L{bx:.2} {by:.2}");
            }
            let _ = writeln!(s, r##"<path d="{d}" fill="none" stroke="#8fa9c9" stroke-width="1"/>"##);
            let _ = writeln!(
                s,
                r##"<text x="{:.2}" y="{:.2}" fill="#4d6d94">V = {:.4e}</text>"##,
                hi - 110.0,
                lo + 16.0 + 14.0 * k as f64,
                level
            );
        }
        let stride = self.points.len().div_ceil(MAX_POINTS).max(1);
        let mut pts: Vec<(f64, f64)> = self.points.iter().step_by(stride).copied().collect();
        if let Some(last) = self.points.last() {
            if self.points.len() > 1 && !(self.points.len() - 1).is_multiple_of(stride) {
                pts.push(*last);
            }
        }
        if pts.len() > 1 {
            let mut d = String::new();
            for (k, p) in pts.iter().enumerate() {
                let (x, y) = win.to_px(*p);
                let _ = write!(d, "{}{x:.2} {y:.2}", if k == 0 { "M" } else { "L" });
            }
            let _ = writeln!(s, r##"<path d="{d}" fill="none" stroke="#c0392b" stroke-width="1.2"/>"##);
        }
        if let Some(p) = pts.first() {
            let (x, y) = win.to_px(*p);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="black"/>"#);
        }
        let _ = writeln!(s, "</g>");
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
