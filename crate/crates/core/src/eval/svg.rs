//! Minimal SVG charts. Every plotted number is repeated in a `data-*` attribute.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, title: &str, kind: &str) {
    let _ = write!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" data-chart="{kind}">
<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>
"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN / 2.0, MARGIN);
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, labels: &[&str]) {
    for (k, l) in labels.iter().enumerate() {
        let y = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            W - 130.0,
            y,
            PALETTE[k % PALETTE.len()],
            W - 115.0,
            y + 9.0,
            escape(l)
        );
    }
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

/// Scatter plot with one colour per series.
pub fn scatter_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title, "scatter");
    axes(&mut out, x_label, y_label);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut xl, mut xh, mut yl, mut yh) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in pts {
        xl = xl.min(x);
        xh = xh.max(x);
        yl = yl.min(y);
        yh = yh.max(y);
    }
    let (xl, xh) = span(xl, xh);
    let (yl, yh) = span(yl, yh);
    let px = |x: f64| MARGIN + (x - xl) / (xh - xl) * (W - 1.5 * MARGIN - 140.0);
    let py = |y: f64| H - MARGIN - (y - yl) / (yh - yl) * (H - 2.0 * MARGIN);
    for (k, s) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<g data-series="{}" fill="{colour}" fill-opacity="0.6">"#,
            escape(&s.label)
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" data-x="{x:e}" data-y="{y:e}"/>"#,
                px(x),
                py(y)
            );
        }
        out.push_str("</g>\n");
    }
    legend(
        &mut out,
        &series.iter().map(|s| s.label.as_str()).collect::<Vec<_>>(),
    );
    out.push_str("</svg>\n");
    out
}

/// Vertical bar chart; bar heights start at zero.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title, "bar");
    axes(&mut out, "", y_label);
    let top = bars
        .iter()
        .map(|b| b.1)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let slot = (W - 1.5 * MARGIN) / bars.len().max(1) as f64;
    for (k, (label, value)) in bars.iter().enumerate() {
        let h = value.max(0.0) / top * (H - 2.0 * MARGIN);
        let x = MARGIN + slot * k as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}" data-label="{}" data-value="{value:e}"/>"#,
            H - MARGIN - h,
            slot * 0.7,
            PALETTE[k % PALETTE.len()],
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            x + slot * 0.35,
            H - MARGIN + 16.0,
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11">{value:.4}</text>"#,
            x + slot * 0.35,
            H - MARGIN - h - 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Overlaid step histograms sharing one set of bin edges.
pub fn histogram_chart(
    title: &str,
    x_label: &str,
    edges: &[f64],
    series: &[(String, Vec<usize>)],
) -> String {
    let mut out = String::new();
    header(&mut out, title, "histogram");
    axes(&mut out, x_label, "count");
    let top = series
        .iter()
        .flat_map(|s| s.1.iter())
        .copied()
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let (lo, hi) = span(
        edges.first().copied().unwrap_or(0.0),
        edges.last().copied().unwrap_or(1.0),
    );
    let px = |x: f64| MARGIN + (x - lo) / (hi - lo) * (W - 1.5 * MARGIN - 140.0);
    for (k, (label, counts)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<g data-series="{}" fill="{colour}" fill-opacity="0.35">"#,
            escape(label)
        );
        for (b, &c) in counts.iter().enumerate() {
            let h = c as f64 / top * (H - 2.0 * MARGIN);
            let (l, u) = (edges[b], edges[b + 1]);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" data-bin="{b}" data-lower="{l:e}" data-upper="{u:e}" data-count="{c}"/>"#,
                px(l),
                H - MARGIN - h,
                (px(u) - px(l)).max(0.5)
            );
        }
        out.push_str("</g>\n");
    }
    legend(
        &mut out,
        &series.iter().map(|s| s.0.as_str()).collect::<Vec<_>>(),
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed_and_carry_values() {
        let bars = vec![
            ("a<b".to_string(), 0.812345678901234),
            ("c".to_string(), 2.5),
        ];
        let svg = bar_chart("Avg & min", "distance", &bars);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let values: Vec<f64> = doc
            .descendants()
            .filter_map(|n| n.attribute("data-value"))
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(values, vec![0.812345678901234, 2.5]);

        let s = scatter_chart(
            "t",
            "x",
            "y",
            &[Series {
                label: "q".into(),
                points: vec![(1.0, -1.0), (0.1, 0.2)],
            }],
        );
        let doc = roxmltree::Document::parse(&s).unwrap();
        assert_eq!(
            doc.descendants()
                .filter(|n| n.has_tag_name("circle"))
                .count(),
            2
        );

        let h = histogram_chart("h", "d", &[0.0, 0.5, 1.0], &[("m".into(), vec![3, 4])]);
        let doc = roxmltree::Document::parse(&h).unwrap();
        let counts: Vec<usize> = doc
            .descendants()
            .filter_map(|n| n.attribute("data-count"))
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(counts, vec![3, 4]);
    }
}
