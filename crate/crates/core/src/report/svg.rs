//! Minimal dependency-free SVG plots.

use std::fmt::Write as _;

use crate::aero::RadialProfiles;
use crate::field::{N_STATIONS, STATION_NAMES};

const W: f64 = 420.0;
const H: f64 = 420.0;
const PAD: f64 = 50.0;

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-12 * lo.abs().max(1.0));
    (lo - pad, hi + pad)
}

fn map(v: f64, (lo, hi): (f64, f64), a: f64, b: f64) -> f64 {
    a + (v - lo) / (hi - lo) * (b - a)
}

fn frame(out: &mut String, title: &str, xlabel: &str, ylabel: &str, xr: (f64, f64), yr: (f64, f64)) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{title}</text>"#, W / 2.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 10.0);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(out, r#"<text x="{PAD}" y="{}" font-size="9">{:.6}</text>"#, H - PAD + 14.0, xr.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="9" text-anchor="end">{:.6}</text>"#, W - PAD, H - PAD + 14.0, xr.1);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="9" text-anchor="end">{:.6}</text>"#, PAD - 2.0, H - PAD, yr.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="9" text-anchor="end">{:.6}</text>"#, PAD - 2.0, PAD + 9.0, yr.1);
}

/// Predicted versus true scatter with the identity line.
pub fn scatter(name: &str, points: &[(f64, f64)]) -> String {
    let r = bounds(points.iter().flat_map(|&(t, p)| [t, p]));
    let mut out = String::new();
    frame(&mut out, name, "truth", "prediction", r, r);
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{PAD}" stroke="gray" stroke-dasharray="4"/>"#,
        H - PAD,
        W - PAD
    );
    for &(t, p) in points {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            map(t, r, PAD, W - PAD),
            map(p, r, H - PAD, PAD)
        );
    }
    out.push_str("</svg>\n");
    out
}

const COLORS: [&str; N_STATIONS] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"];

/// Radial profiles of one variable at every station: truth solid, prediction dashed.
pub fn profiles(name: &str, truth: &RadialProfiles, pred: &RadialProfiles, var: usize) -> String {
    let nr = truth.n_radial();
    let xr = bounds(
        (0..N_STATIONS).flat_map(|s| (0..nr).flat_map(move |j| [truth.values[s][j][var], pred.values[s][j][var]])),
    );
    let yr = (0.0, 1.0);
    let mut out = String::new();
    frame(&mut out, &format!("{name} radial profiles"), name, "span", xr, yr);
    for s in 0..N_STATIONS {
        for (p, dash) in [(truth, ""), (pred, r#" stroke-dasharray="5 3""#)] {
            let pts: Vec<String> = (0..nr)
                .map(|j| {
                    format!(
                        "{:.2},{:.2}",
                        map(p.values[s][j][var], xr, PAD, W - PAD),
                        map((j as f64 + 0.5) / nr as f64, yr, H - PAD, PAD)
                    )
                })
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}"{dash}/>"#,
                pts.join(" "),
                COLORS[s]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{}">{}</text>"#,
            PAD + 6.0,
            PAD + 14.0 * (s + 1) as f64,
            COLORS[s],
            STATION_NAMES[s]
        );
    }
    out.push_str("</svg>\n");
    out
}
