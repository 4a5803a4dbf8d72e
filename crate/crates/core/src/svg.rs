//! Deterministic SVG figures: profile overlays in the `(x, r)` half-plane and
//! simple line plots.

use std::fmt::Write as _;

use crate::geometry::{Point, ProfileCurve, Topology};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Style {
    /// Defaults to the palette entry for the curve's position.
    pub stroke: Option<String>,
    pub width: Option<f64>,
    pub dashed: bool,
    pub label: Option<String>,
}

impl Style {
    pub fn labelled(label: impl Into<String>) -> Self {
        Self {
            label: Some(label.into()),
            ..Self::default()
        }
    }
}

struct Frame {
    lo: Point,
    hi: Point,
    width: f64,
    height: f64,
    margin: f64,
}

impl Frame {
    fn new(lo: Point, hi: Point, width: f64) -> Self {
        let span_x = (hi.x - lo.x).max(1e-12);
        let span_r = (hi.r - lo.r).max(1e-12);
        let plot_w = width - 2.0 * 40.0;
        Self {
            lo,
            hi,
            width,
            height: plot_w * span_r / span_x + 2.0 * 40.0,
            margin: 40.0,
        }
    }

    fn map(&self, p: Point) -> (f64, f64) {
        let s = (self.width - 2.0 * self.margin) / (self.hi.x - self.lo.x).max(1e-12);
        (
            self.margin + (p.x - self.lo.x) * s,
            self.height - self.margin - (p.r - self.lo.r) * s,
        )
    }
}

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        num(w),
        num(h),
        num(w),
        num(h)
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

fn legend(out: &mut String, x: f64, y: f64, entries: &[(String, String, bool)]) {
    for (k, (label, stroke, dashed)) in entries.iter().enumerate() {
        let yy = y + 16.0 * k as f64;
        let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="2"{dash}/>"#,
            num(x),
            num(yy),
            num(x + 24.0),
            num(yy)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            num(x + 30.0),
            num(yy + 4.0),
            escape(label)
        );
    }
}

/// Profiles drawn to scale in the upper half-plane, with the rotation axis
/// and a legend for labelled curves.
pub fn render_profile_svg(curves: &[(&ProfileCurve, Style)]) -> String {
    let mut lo = Point::new(f64::INFINITY, 0.0);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (c, _) in curves {
        for p in c.nodes() {
            lo = Point::new(lo.x.min(p.x), 0.0);
            hi = Point::new(hi.x.max(p.x), hi.r.max(p.r));
        }
    }
    if curves.is_empty() || !lo.x.is_finite() {
        lo = Point::new(-1.0, 0.0);
        hi = Point::new(1.0, 1.0);
    }
    let pad = 0.05 * (hi.x - lo.x).max(hi.r - lo.r).max(1e-9);
    let lo = Point::new(lo.x - pad, 0.0);
    let hi = Point::new(hi.x + pad, hi.r + pad);
    let frame = Frame::new(lo, hi, 640.0);
    let mut out = String::new();
    header(&mut out, frame.width, frame.height);
    let (ax0, ay) = frame.map(Point::new(lo.x, 0.0));
    let (ax1, _) = frame.map(Point::new(hi.x, 0.0));
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888" stroke-width="1"/>"##,
        num(ax0),
        num(ay),
        num(ax1),
        num(ay)
    );
    if lo.x < 0.0 && hi.x > 0.0 {
        let (vx, vy0) = frame.map(Point::new(0.0, 0.0));
        let (_, vy1) = frame.map(Point::new(0.0, hi.r));
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#ccc" stroke-width="1"/>"##,
            num(vx),
            num(vy0),
            num(vx),
            num(vy1)
        );
    }
    let mut entries = Vec::new();
    for (k, (curve, style)) in curves.iter().enumerate() {
        let stroke = style
            .stroke
            .clone()
            .unwrap_or_else(|| PALETTE[k % PALETTE.len()].to_string());
        let width = style.width.unwrap_or(1.5);
        let mut d = String::new();
        for (j, &p) in curve.nodes().iter().enumerate() {
            let (x, y) = frame.map(p);
            let _ = write!(d, "{}{} {}", if j == 0 { "M" } else { " L" }, num(x), num(y));
        }
        if curve.topology() == Topology::Closed {
            d.push_str(" Z");
        }
        let dash = if style.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<path d="{d}" fill="none" stroke="{stroke}" stroke-width="{}"{dash}/>"#,
            num(width)
        );
        if let Some(label) = &style.label {
            entries.push((label.clone(), stroke, style.dashed));
        }
    }
    legend(&mut out, frame.margin, 20.0, &entries);
    out.push_str("</svg>\n");
    out
}

/// Line plot of labelled `(x, y)` series with min/max axis annotations.
pub fn render_series_svg(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let pts = series.iter().flat_map(|(_, s)| s.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let y0 = y0.min(0.0);
    let map = |x: f64, y: f64| {
        (
            m + (x - x0) / (x1 - x0) * (w - 2.0 * m),
            h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m),
        )
    };
    let mut out = String::new();
    header(&mut out, w, h);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14">{}</text>"#,
        num(m),
        escape(title)
    );
    let (bx, by) = map(x0, y0);
    let (tx, ty) = map(x1, y1);
    let _ = writeln!(
        out,
        r##"<path d="M{} {} L{} {} M{} {} L{} {}" fill="none" stroke="#888"/>"##,
        num(bx),
        num(ty),
        num(bx),
        num(by),
        num(bx),
        num(by),
        num(tx),
        num(by)
    );
    for (text, x, y, anchor) in [
        (format!("{x0:.4}"), bx, by + 16.0, "start"),
        (format!("{x1:.4}"), tx, by + 16.0, "end"),
        (format!("{y0:.4}"), bx - 4.0, by, "end"),
        (format!("{y1:.4}"), bx - 4.0, ty + 4.0, "end"),
        (x_label.to_string(), 0.5 * (bx + tx), by + 32.0, "middle"),
    ] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{}</text>"#,
            num(x),
            num(y),
            escape(&text)
        );
    }
    let mut entries = Vec::new();
    for (k, (label, s)) in series.iter().enumerate() {
        let stroke = PALETTE[k % PALETTE.len()].to_string();
        let mut d = String::new();
        for &(x, y) in s.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let (px, py) = map(x, y);
            let _ = write!(d, "{}{} {}", if d.is_empty() { "M" } else { " L" }, num(px), num(py));
        }
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#);
        entries.push((label.clone(), stroke, false));
    }
    legend(&mut out, w - 160.0, 40.0, &entries);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{circle, sphere};

    #[test]
    fn nested_tori_give_two_closed_paths() {
        let t = circle(2, Point::new(0.0, 2.0), 0.5, 64).unwrap();
        let s = t.scaled(0.5f64.sqrt());
        let svg = render_profile_svg(&[(&t, Style::labelled("T")), (&s, Style::labelled("√0.5·T"))]);
        assert_eq!(svg.matches("<path").count(), 2);
        assert_eq!(svg.matches(" Z\"").count(), 2);
        assert!(svg.contains("√0.5·T"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn open_arcs_and_escaping() {
        let s = sphere(2, 1.0, 16).unwrap();
        let svg = render_profile_svg(&[(&s, Style { dashed: true, ..Style::labelled("a<b") })]);
        assert!(!svg.contains(" Z\""));
        assert!(svg.contains("a&lt;b") && svg.contains("stroke-dasharray"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let t = circle(2, Point::new(0.3, 2.0), 0.5, 64).unwrap();
        let a = render_profile_svg(&[(&t, Style::default())]);
        assert_eq!(a, render_profile_svg(&[(&t, Style::default())]));
        let series = vec![("x".to_string(), vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0)])];
        let p = render_series_svg("t", "x", &series);
        assert_eq!(p, render_series_svg("t", "x", &series));
        assert!(!p.contains("NaN"));
        assert!(render_series_svg("empty", "x", &[]).contains("</svg>"));
        assert!(render_profile_svg(&[]).contains("</svg>"));
    }
}
