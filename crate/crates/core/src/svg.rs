//! Minimal single-series SVG line chart.

use std::fmt::Write;

use crate::cli::sig6;

const W: f64 = 480.0;
const H: f64 = 320.0;
const MARGIN: f64 = 50.0;
const TICKS: usize = 5;

fn num(v: f64) -> String {
    sig6(v).to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Polyline of `(x, y)` points with labeled axes and ticks.
pub fn line_chart(points: &[(f64, f64)], x_label: &str, y_label: &str, title: &str) -> String {
    let finite: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let (x0, x1) = span(
        finite.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).min(0.0),
        finite.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).max(1.0),
    );
    let (y0, y1) = span(
        finite.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).min(0.0),
        finite.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).max(1.0),
    );
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (bx, by, tx, ty) = (sx(x0), sy(y0), sx(x1), sy(y1));
    let _ = writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{tx}" y2="{by}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{bx}" y2="{ty}" stroke="black"/>"#);
    for k in 0..=TICKS {
        let f = k as f64 / TICKS as f64;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (num(sx(xv)), num(sy(yv)));
        let _ = writeln!(s, r#"<line x1="{px}" y1="{by}" x2="{px}" y2="{}" stroke="black"/>"#, by + 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{px}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
            by + 18.0,
            num(xv)
        );
        let _ = writeln!(s, r#"<line x1="{}" y1="{py}" x2="{bx}" y2="{py}" stroke="black"/>"#, bx - 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{py}" font-size="11" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            bx - 8.0,
            num(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    let pts: Vec<String> = finite.iter().map(|&(x, y)| format!("{},{}", num(sx(x)), num(sy(y)))).collect();
    let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, pts.join(" "));
    s.push_str("</svg>\n");
    s
}
