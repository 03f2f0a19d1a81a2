//! Static SVG sketches of the base picture: base curves, critical values,
//! and intersection base points. Write-only artifacts with no computational
//! role.

use crate::fibration::{BasePath, Curve};
use crate::models::Model;
use num_complex::Complex64;
use std::fmt::Write;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Render the base picture: labelled curves, critical values as filled
/// dots, intersection base values as crosses.
pub fn render_base_svg(
    model: &Model,
    curves: &[(String, BasePath)],
    intersections: &[Complex64],
) -> String {
    // Bounding box over curve samples and marked points.
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut polylines = Vec::new();
    for (_, path) in curves {
        let (a, b) = path.domain();
        let pts: Vec<Complex64> = (0..=256)
            .map(|k| path.at(a + (b - a) * k as f64 / 256.0))
            .collect();
        for p in &pts {
            xs.push(p.re);
            ys.push(p.im);
        }
        polylines.push(pts);
    }
    for cv in model.critical_values() {
        xs.push(cv.re);
        ys.push(cv.im);
    }
    for p in intersections {
        xs.push(p.re);
        ys.push(p.im);
    }
    if xs.is_empty() {
        xs.push(0.0);
        ys.push(0.0);
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let span = (x1 - x0).max(y1 - y0).max(1e-6);
    let pad = 0.1 * span;
    let scale = 540.0 / (span + 2.0 * pad);
    let to_px = |p: Complex64| -> (f64, f64) {
        (
            (p.re - x0 + pad) * scale + 30.0,
            // SVG y grows downward.
            (y1 + pad - p.im) * scale + 30.0,
        )
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="600" height="600" viewBox="0 0 600 600">"#
    );
    let _ = writeln!(svg, r#"<rect width="600" height="600" fill="white"/>"#);
    for (i, ((name, _), pts)) in curves.iter().zip(&polylines).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (k, p) in pts.iter().enumerate() {
            let (x, y) = to_px(*p);
            let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, x, y);
        }
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            d.trim_end(),
            color
        );
        if let Some(p) = pts.first() {
            let (x, y) = to_px(*p);
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{}">{}</text>"#,
                x + 4.0,
                y - 4.0,
                color,
                name
            );
        }
    }
    for cv in model.critical_values() {
        let (x, y) = to_px(*cv);
        let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="black"/>"#);
    }
    for p in intersections {
        let (x, y) = to_px(*p);
        let _ = writeln!(
            svg,
            "<path d=\"M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}\" stroke=\"#333333\" stroke-width=\"1.2\"/>",
            x - 4.0,
            y - 4.0,
            x + 4.0,
            y + 4.0,
            x - 4.0,
            y + 4.0,
            x + 4.0,
            y - 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo, hi)
}
