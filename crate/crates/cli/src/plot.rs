use std::fmt::Write;
use subpop_core::analysis::SweepResult;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

/// Overall accuracy (x) against worst-5%-class accuracy (y), one dot per
/// cell, Pareto cells filled and labelled with their k and lambda.
pub fn sweep_svg(result: &SweepResult) -> String {
    let points: Vec<(f64, f64)> = result
        .cells
        .iter()
        .map(|c| (c.report.overall_accuracy, c.report.worst_class(0.05).unwrap_or(0.0)))
        .collect();
    let range = |vals: Vec<f64>| {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-9 { (lo - 0.01, hi + 0.01) } else { (lo, hi) }
    };
    let (x0, x1) = range(points.iter().map(|p| p.0).collect());
    let (y0, y1) = range(points.iter().map(|p| p.1).collect());
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let front = result.pareto_front();

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="10">"#).unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">overall accuracy ({x0:.3} to {x1:.3})</text>"#, W / 2.0, H - 12.0).unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">worst 5% class accuracy ({y0:.3} to {y1:.3})</text>"#,
        H / 2.0,
        H / 2.0
    )
    .unwrap();
    for (i, (c, &(x, y))) in result.cells.iter().zip(&points).enumerate() {
        let on_front = front.contains(&i);
        let fill = if on_front { "black" } else { "none" };
        writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" stroke="black" fill="{fill}"/>"#, sx(x), sy(y)).unwrap();
        if on_front {
            writeln!(s, r#"<text x="{:.2}" y="{:.2}">k={} λ={}</text>"#, sx(x) + 5.0, sy(y) - 5.0, c.k, c.lambda).unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}
