//! Tradeoff plots written as plain SVG: fixed 800×500 viewBox, log-scale λ
//! axis, one polyline per curve. Numbers are formatted with fixed precision
//! so identical inputs always produce identical bytes.

use xmodal_core::invariants::PathPoint;

const W: f64 = 800.0;
const H: f64 = 500.0;
const ML: f64 = 70.0; // margins
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

struct Curve<'a> {
    label: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>, // (λ, value), λ > 0
}

/// Both curves are normalized to their own maximum (the scales differ by
/// orders of magnitude); the legend carries the true maxima. λ = 0 grid
/// points cannot sit on a log axis and are dropped from the plot.
pub fn tradeoff_svg(title: &str, path: &[PathPoint]) -> String {
    let curves = [
        Curve {
            label: "err_local",
            color: "#1f77b4",
            points: path.iter().filter(|p| p.lambda > 0.0).map(|p| (p.lambda, p.err_local)).collect(),
        },
        Curve {
            label: "variation",
            color: "#d62728",
            points: path.iter().filter(|p| p.lambda > 0.0).map(|p| (p.lambda, p.variation)).collect(),
        },
    ];
    let (mut lx_min, mut lx_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in &curves {
        for &(l, _) in &c.points {
            lx_min = lx_min.min(l.log10());
            lx_max = lx_max.max(l.log10());
        }
    }
    if !lx_min.is_finite() || lx_max - lx_min < 1e-9 {
        (lx_min, lx_max) = (-1.0, 1.0);
    }
    let x_of = |lambda: f64| ML + (lambda.log10() - lx_min) / (lx_max - lx_min) * (W - ML - MR);
    let y_of = |t: f64| H - MB - t * (H - MT - MB); // t in [0, 1]

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" width=\"{W}\" height=\"{H}\">\n"
    ));
    s.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        xml_escape(title)
    ));
    // Axes.
    s.push_str(&format!(
        "  <line x1=\"{ML}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    s.push_str(&format!(
        "  <line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        H - MB
    ));
    // One tick per decade.
    let (d0, d1) = (lx_min.ceil() as i64, lx_max.floor() as i64);
    for d in d0..=d1 {
        let x = x_of(10f64.powi(d as i32));
        s.push_str(&format!(
            "  <line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
            H - MB,
            H - MB + 6.0
        ));
        s.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">1e{d}</text>\n",
            H - MB + 22.0
        ));
    }
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">lambda (log scale)</text>\n",
        (ML + W - MR) / 2.0,
        H - 12.0
    ));
    s.push_str(&format!(
        "  <text x=\"18\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">relative value</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    ));
    for (i, c) in curves.iter().enumerate() {
        let max = c.points.iter().fold(0.0f64, |m, &(_, v)| m.max(v));
        let denom = if max > 0.0 { max } else { 1.0 };
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|&(l, v)| format!("{:.2},{:.2}", x_of(l), y_of(v / denom)))
            .collect();
        if !pts.is_empty() {
            s.push_str(&format!(
                "  <polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
                c.color,
                pts.join(" ")
            ));
        }
        let ly = MT + 16.0 + 18.0 * i as f64;
        s.push_str(&format!(
            "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            ML + 10.0,
            ly - 10.0,
            c.color
        ));
        s.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{ly:.2}\" font-family=\"sans-serif\" font-size=\"12\">{} (max {:.3e})</text>\n",
            ML + 28.0,
            c.label,
            max
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
