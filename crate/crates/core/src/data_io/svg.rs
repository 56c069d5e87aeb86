//! Minimal self-contained SVG renderers for line charts and heatmaps.

use std::fmt::Write as _;

use crate::Matrix;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Linear blend from dark blue (`t = 0`) to yellow (`t = 1`).
pub fn color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(32.0, 253.0), lerp(26.0, 231.0), lerp(110.0, 37.0))
}

/// Color-mapped grid, one cell per matrix entry. The color scale spans the
/// matrix minimum and maximum, which are written into the legend and into
/// the root element's `data-min` / `data-max` attributes.
pub fn heatmap(m: &Matrix, title: &str) -> String {
    let cell = (600 / m.rows().max(m.cols()).max(1)).max(2);
    let (w, h) = (m.cols() * cell, m.rows() * cell);
    let (lo, hi) = m.as_slice().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" data-min="{lo}" data-max="{hi}">"#,
        w + 40,
        h + 80
    )
    .unwrap();
    writeln!(out, r#"<text x="20" y="20" font-size="14">{}</text>"#, escape(title)).unwrap();
    writeln!(out, r#"<g transform="translate(20,30)" shape-rendering="crispEdges">"#).unwrap();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let t = if span > 0.0 { (m.get(r, c) - lo) / span } else { 0.0 };
            writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{}"/>"#,
                c * cell,
                r * cell,
                color(t)
            )
            .unwrap();
        }
    }
    out.push_str("</g>\n");
    let y = h + 50;
    writeln!(out, r#"<rect x="20" y="{y}" width="12" height="12" fill="{}"/>"#, color(0.0)).unwrap();
    writeln!(out, r#"<text x="36" y="{}" font-size="12" class="min">min={lo}</text>"#, y + 11).unwrap();
    writeln!(out, r#"<rect x="200" y="{y}" width="12" height="12" fill="{}"/>"#, color(1.0)).unwrap();
    writeln!(out, r#"<text x="216" y="{}" font-size="12" class="max">max={hi}</text>"#, y + 11).unwrap();
    out.push_str("</svg>\n");
    out
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with one polyline per series and a legend.
pub fn line_chart(series: &[Series], title: &str, x_label: &str, y_label: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 60.0;
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
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.05 };
        (y0, y1) = (y0 - pad, y1 + pad);
    }
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">"#).unwrap();
    writeln!(out, r#"<text x="{PAD}" y="24" font-size="14">{}</text>"#, escape(title)).unwrap();
    writeln!(
        out,
        r#"<path d="M{PAD},{} H{} M{PAD},{} V{}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD,
        H - PAD,
        PAD
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 15.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="15" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (v, y) in [(y0, py(y0)), (y1, py(y1))] {
        writeln!(out, r#"<text x="{}" y="{y}" font-size="10" text-anchor="end">{v:.4e}</text>"#, PAD - 4.0).unwrap();
    }
    for (v, x) in [(x0, px(x0)), (x1, px(x1))] {
        writeln!(out, r#"<text x="{x}" y="{}" font-size="10" text-anchor="middle">{v}</text>"#, H - PAD + 14.0)
            .unwrap();
    }
    for (k, s) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(out, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, pts.join(" ")).unwrap();
        let ly = PAD + 16.0 * k as f64;
        writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/>"#, W - PAD - 120.0, ly - 9.0).unwrap();
        writeln!(out, r#"<text x="{}" y="{ly}" font-size="11">{}</text>"#, W - PAD - 105.0, escape(&s.name)).unwrap();
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_heatmap_is_one_color() {
        let svg = heatmap(&Matrix::filled(100, 100, 11000.0), "pre");
        let fills: std::collections::BTreeSet<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<rect x=") && l.contains("width=\"6\""))
            .filter_map(|l| l.split("fill=\"").nth(1))
            .collect();
        assert_eq!(fills.len(), 1);
        assert_eq!(svg.matches("<rect").count(), 10000 + 2);
        assert!(svg.contains(r#"data-min="11000" data-max="11000""#));
    }

    #[test]
    fn heatmap_scale_spans_min_and_max() {
        let m = Matrix::from_vec(1, 3, vec![2230.4, 5000.0, 12855.4]);
        let svg = heatmap(&m, "x");
        assert!(svg.contains("min=2230.4") && svg.contains("max=12855.4"));
        assert!(svg.contains(&color(0.0)) && svg.contains(&color(1.0)));
    }

    #[test]
    fn line_chart_has_one_polyline_per_series() {
        let s = vec![
            Series { name: "a<b".into(), points: vec![(0.0, 1.0), (1.0, 2.0)] },
            Series { name: "c".into(), points: vec![(0.0, 3.0)] },
        ];
        let svg = line_chart(&s, "t", "x", "y");
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(line_chart(&[], "t", "x", "y").starts_with("<svg"));
    }
}
