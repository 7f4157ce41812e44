//! Minimal static SVG charts: bars plus overlaid polylines.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 5] = ["#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Bar chart of `bars` (x, height) with each series drawn as a line with markers.
pub fn bar_and_lines(title: &str, x_label: &str, bars: &[(f64, f64)], lines: &[Series]) -> String {
    let xs = bars.iter().map(|p| p.0).chain(lines.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let ys = bars.iter().map(|p| p.1).chain(lines.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (x_min, x_max) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let y_max = ys.fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let (x_min, x_max) = if x_min.is_finite() { (x_min - 0.5, x_max + 0.5) } else { (0.0, 1.0) };
    let sx = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - y / (y_max * 1.05) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let base = HEIGHT - MARGIN;
    let _ = writeln!(out, r#"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, WIDTH - MARGIN);
    let _ = writeln!(out, r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{base}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(x_label));

    let bar_w = (WIDTH - 2.0 * MARGIN) / (x_max - x_min) * 0.8;
    for &(x, y) in bars {
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4" fill-opacity="0.6"/>"##,
            sx(x) - bar_w / 2.0,
            sy(y),
            bar_w,
            base - sy(y)
        );
    }
    for x in (x_min.ceil() as i64)..=(x_max.floor() as i64) {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">{x}</text>"#, sx(x as f64), base + 15.0);
    }
    for (i, s) in lines.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        for &(x, y) in &s.points {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" text-anchor="end" fill="{color}">{}</text>"#,
            WIDTH - MARGIN,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_element() {
        let svg = bar_and_lines(
            "a < b",
            "hops",
            &[(1.0, 0.2), (2.0, 0.5)],
            &[Series { label: "fit".into(), points: vec![(1.0, 0.25), (2.0, 0.45)] }],
        );
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<rect").count(), 3);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("a &lt; b"));
    }
}
