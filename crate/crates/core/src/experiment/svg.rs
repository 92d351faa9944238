//! Minimal scatter plots: one panel per projection, points plus axes.

use std::fmt::Write as _;

use nalgebra::DMatrix;

pub(crate) struct Panel {
    pub title: String,
    /// `2 × n` coordinates.
    pub coords: DMatrix<f64>,
    pub groups: Vec<usize>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const SIZE: f64 = 320.0;
const MARGIN: f64 = 30.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

pub(crate) fn scatter_svg(panels: &[Panel]) -> String {
    let width = SIZE * panels.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{SIZE}" viewBox="0 0 {width} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        let x0 = i as f64 * SIZE;
        let inner = SIZE - 2.0 * MARGIN;
        let (xl, xh) = range(p.coords.row(0).iter().copied());
        let (yl, yh) = range(p.coords.row(1).iter().copied());
        let px = |x: f64| x0 + MARGIN + (x - xl) / (xh - xl) * inner;
        let py = |y: f64| SIZE - MARGIN - (y - yl) / (yh - yl) * inner;
        let _ = writeln!(s, r#"<g>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="18" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            x0 + SIZE / 2.0,
            escape(&p.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="#888"/>"##,
            x0 + MARGIN
        );
        // Axes through the origin when it is in view.
        if xl < 0.0 && xh > 0.0 {
            let _ = writeln!(
                s,
                r##"<line x1="{0:.1}" y1="{MARGIN}" x2="{0:.1}" y2="{1:.1}" stroke="#ccc"/>"##,
                px(0.0),
                SIZE - MARGIN
            );
        }
        if yl < 0.0 && yh > 0.0 {
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{2:.1}" x2="{:.1}" y2="{2:.1}" stroke="#ccc"/>"##,
                x0 + MARGIN,
                x0 + SIZE - MARGIN,
                py(0.0)
            );
        }
        for (j, c) in p.coords.column_iter().enumerate() {
            let color = PALETTE[p.groups.get(j).copied().unwrap_or(0) % PALETTE.len()];
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(c[0]), py(c[1]));
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emits_one_circle_per_point() {
        let coords = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, -1.0, 0.5, 0.0, 2.0]);
        let svg = scatter_svg(&[Panel { title: "a<b".into(), coords, groups: vec![0, 1, 1] }]);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(scatter_svg(&[]).contains("<svg"));
    }
}
