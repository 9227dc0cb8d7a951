//! Log-log line plot of mean error curves as standalone SVG.

use std::fmt::Write as _;

use super::table::ResultTable;
use super::HarnessError;
use crate::streaming::Algorithm;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

fn color(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Oja => "#1f77b4",
        Algorithm::OjaDownsampled => "#d62728",
        Algorithm::Offline => "#2ca02c",
    }
}

fn label(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Oja => "Oja",
        Algorithm::OjaDownsampled => "Oja (downsampled)",
        Algorithm::Offline => "Offline",
    }
}

/// Mean error per algorithm against stream position, both axes log10.
/// Non-positive values are clamped to the smallest positive one.
pub fn render_svg(table: &ResultTable) -> Result<String, HarnessError> {
    if table.is_empty() {
        return Err(HarnessError::Config("cannot plot an empty table".into()));
    }
    let curves: Vec<(Algorithm, Vec<(usize, f64)>)> =
        table.algorithms().into_iter().map(|a| (a, table.mean_curve(a))).collect();
    let positive_min = curves
        .iter()
        .flat_map(|(_, c)| c.iter().map(|p| p.1))
        .filter(|&y| y > 0.0 && y.is_finite())
        .fold(f64::INFINITY, f64::min);
    let floor = if positive_min.is_finite() { positive_min } else { 1e-16 };
    let ys = curves.iter().flat_map(|(_, c)| c.iter().map(|p| p.1.max(floor).log10()));
    let (mut y_lo, mut y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    y_lo = y_lo.floor();
    y_hi = y_hi.ceil().max(y_lo + 1.0);
    let checkpoints = table.checkpoints();
    let mut x_lo = (checkpoints[0] as f64).log10().floor();
    let mut x_hi = (*checkpoints.last().expect("non-empty") as f64).log10().ceil();
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    x_lo = x_lo.max(0.0);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * ph;

    let mut s = String::new();
    let w = &mut s;
    let fmt_err = |_| HarnessError::Config("formatting SVG".into());
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).map_err(fmt_err)?;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .map_err(fmt_err)?;
    writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).map_err(fmt_err)?;
    writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    )
    .map_err(fmt_err)?;
    for e in (x_lo as i32)..=(x_hi as i32) {
        let x = px(e as f64);
        writeln!(
            w,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"##,
            TOP + ph,
            TOP + ph + 18.0
        )
        .map_err(fmt_err)?;
    }
    for e in (y_lo as i32)..=(y_hi as i32) {
        let y = py(e as f64);
        writeln!(
            w,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        )
        .map_err(fmt_err)?;
    }
    writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">samples n</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    )
    .map_err(fmt_err)?;
    writeln!(
        w,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">mean sin² error</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .map_err(fmt_err)?;
    for (i, (a, curve)) in curves.iter().enumerate() {
        let points: Vec<String> = curve
            .iter()
            .map(|&(n, y)| format!("{:.2},{:.2}", px((n as f64).log10()), py(y.max(floor).log10())))
            .collect();
        writeln!(
            w,
            r#"<polyline data-algorithm="{a}" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            color(*a),
            points.join(" ")
        )
        .map_err(fmt_err)?;
        let ly = TOP + 20.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        writeln!(
            w,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            color(*a),
            lx + 30.0,
            ly + 4.0,
            label(*a)
        )
        .map_err(fmt_err)?;
    }
    writeln!(w, "</svg>").map_err(fmt_err)?;
    Ok(s)
}
