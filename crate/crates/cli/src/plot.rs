use std::fmt::Write;

use selfsim::fractal::{lo, pf, BoxCurve};

use crate::error::CliResult;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 48.0;

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo > 1e-12 {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn polyline(points: &[(f64, f64)], style: &str) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
    format!("<polyline fill=\"none\" {style} points=\"{}\"/>\n", pts.join(" "))
}

/// `ln N` against `lo(theta)`, with the reference line `pf` dashed.
pub fn curve_svg(curve: &BoxCurve) -> CliResult<String> {
    let thetas = curve.grid.thetas();
    let xs: Vec<f64> = thetas.iter().map(|&t| lo(t)).collect();
    let refs = thetas.iter().map(|&t| pf(t, &curve.grid, curve.d)).collect::<selfsim::Result<Vec<_>>>()?;
    let (x0, x1) = bounds(xs.iter().copied());
    let (y0, y1) = bounds(curve.log_n.iter().chain(&refs).copied());
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let measured: Vec<_> = xs.iter().zip(&curve.log_n).map(|(&x, &y)| (sx(x), sy(y))).collect();
    let reference: Vec<_> = xs.iter().zip(&refs).map(|(&x, &y)| (sx(x), sy(y))).collect();

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    s.push_str(&polyline(&reference, "stroke=\"#999\" stroke-dasharray=\"6 4\" stroke-width=\"1.5\""));
    s.push_str(&polyline(&measured, "stroke=\"#1f77b4\" stroke-width=\"2\""));
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">lo(theta)</text>",
        WIDTH / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">ln N</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"11\">{x0:.3}</text>", HEIGHT - MARGIN + 14.0);
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{x1:.3}</text>",
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 14.0
    );
    let _ = writeln!(s, "<text x=\"4\" y=\"{}\" font-size=\"11\">{y0:.2}</text>", HEIGHT - MARGIN);
    let _ = writeln!(s, "<text x=\"4\" y=\"{}\" font-size=\"11\">{y1:.2}</text>", MARGIN + 4.0);
    s.push_str("</svg>\n");
    Ok(s)
}
