//! Minimal line charts.

use std::fmt::Write;

pub struct Line<'a> {
    pub label: String,
    pub x: &'a [f64],
    pub y: Vec<f64>,
    pub color: &'static str,
    pub dashed: bool,
}

pub struct Panel<'a> {
    pub title: String,
    pub x_label: String,
    pub lines: Vec<Line<'a>>,
}

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;
const MAX_POINTS: usize = 1500;

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Stacks the panels vertically into one SVG document.
pub fn render(panels: &[Panel<'_>]) -> String {
    let height = PANEL_H * panels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        panel(&mut s, p, i as f64 * PANEL_H);
    }
    s.push_str("</svg>\n");
    s
}

fn panel(s: &mut String, p: &Panel<'_>, top: f64) {
    let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
    let (y0, y1) = (top + MARGIN_T, top + PANEL_H - MARGIN_B);
    let finite = |v: &&f64| v.is_finite();
    let xs = p.lines.iter().flat_map(|l| l.x.iter()).filter(finite);
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let ys = p.lines.iter().flat_map(|l| l.y.iter()).filter(finite);
    let (mut ymin, mut ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !ymin.is_finite() {
        (ymin, ymax) = (0.0, 1.0);
    }
    if ymax - ymin <= 1e-300 {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    let (xmin, xmax) = if xmin < xmax { (xmin, xmax) } else { (0.0, 1.0) };
    let sx = |v: f64| x0 + (v - xmin) / (xmax - xmin) * (x1 - x0);
    let sy = |v: f64| y1 - (v - ymin) / (ymax - ymin) * (y1 - y0);

    let _ = writeln!(
        s,
        r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        x1 - x0,
        y1 - y0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
        (x0 + x1) / 2.0,
        top + 18.0,
        escape(&p.title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        y1 + 32.0,
        escape(&p.x_label)
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = xmin + f * (xmax - xmin);
        let yv = ymin + f * (ymax - ymin);
        let _ = writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#444">{}</text>"##,
            sx(xv),
            y1 + 15.0,
            fmt_tick(xv)
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#444">{}</text>"##,
            x0 - 5.0,
            sy(yv) + 4.0,
            fmt_tick(yv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" x2="{x1}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##,
            y = sy(yv)
        );
    }
    for (i, l) in p.lines.iter().enumerate() {
        let stride = (l.x.len() / MAX_POINTS).max(1);
        let mut pts = String::new();
        for k in (0..l.x.len())
            .step_by(stride)
            .chain(std::iter::once(l.x.len().saturating_sub(1)))
        {
            let (xv, yv) = (l.x[k], l.y[k]);
            if xv.is_finite() && yv.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(xv), sy(yv));
            }
        }
        let dash = if l.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.3"{dash} points="{}"/>"#,
            l.color,
            pts.trim_end()
        );
        let ly = y0 + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            x1 - 150.0,
            x1 - 130.0,
            l.color,
            x1 - 125.0,
            ly + 4.0,
            escape(&l.label)
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_document() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let svg = render(&[Panel {
            title: "a < b".into(),
            x_label: "t".into(),
            lines: vec![Line {
                label: "y".into(),
                x: &x,
                y: x.iter().map(|v| v * v).collect(),
                color: PALETTE[0],
                dashed: false,
            }],
        }]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
