//! Minimal SVG line charts for run logs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::run::RunLog;
use crate::{idx, Error, Result};

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

fn extent(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut e = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite()) {
        e = (e.0.min(*x), e.1.max(*x), e.2.min(*y), e.3.max(*y));
    }
    if !e.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let widen = |lo: f64, hi: f64| if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let (x0, x1) = widen(e.0, e.1);
    let (y0, y1) = widen(e.2, e.3);
    (x0, x1, y0, y1)
}

/// Renders the series as one SVG chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = extent(series);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (v, anchor, x, y) in [
        (x0, "start", PAD, H - PAD + 15.0),
        (x1, "end", W - PAD, H - PAD + 15.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#);
    }
    for (v, y) in [(y0, H - PAD), (y1, PAD + 10.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{v:.3}</text>"#, PAD - 4.0);
    }
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        let ly = PAD + 15.0 + 15.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            W - PAD - 110.0,
            ser.label
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: PathBuf, svg: String) -> Result<PathBuf> {
    std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Trajectory projection, per-axis tracking, inputs and tube width.
pub fn plot_run(log: &RunLog, dir: &Path) -> Result<Vec<PathBuf>> {
    let stem = format!("{}_{}_{}", log.controller, log.trajectory, log.seed);
    let rec = &log.records;
    let series = |label, dashed, f: &dyn Fn(&super::run::StepRecord) -> (f64, f64)| Series {
        label,
        points: rec.iter().map(f).collect(),
        dashed,
    };
    let mut out = Vec::new();
    out.push(write(
        dir.join(format!("xy_{stem}.svg")),
        line_chart(
            "Horizontal projection",
            "x (m)",
            "y (m)",
            &[
                series("reference", true, &|r| (r.reference[idx::PX], r.reference[idx::PY])),
                series("flown", false, &|r| (r.state[idx::PX], r.state[idx::PY])),
            ],
        ),
    )?);
    let axes = ["x", "y", "z"];
    let mut tracking = Vec::new();
    for (a, name) in axes.iter().enumerate() {
        tracking.push(series(name, false, &|r| (r.t, r.state[a])));
    }
    for a in 0..3 {
        tracking.push(Series {
            label: "ref",
            points: rec.iter().map(|r| (r.t, r.reference[a])).collect(),
            dashed: true,
        });
    }
    out.push(write(
        dir.join(format!("tracking_{stem}.svg")),
        line_chart("Position tracking", "t (s)", "m", &tracking),
    )?);
    out.push(write(
        dir.join(format!("inputs_{stem}.svg")),
        line_chart(
            "Inputs",
            "t (s)",
            "N, 10 mN·m",
            &[
                series("u1 (N)", false, &|r| (r.t, r.input[0])),
                series("u2 ×10", false, &|r| (r.t, 10.0 * r.input[1])),
                series("u3 ×10", false, &|r| (r.t, 10.0 * r.input[2])),
                series("u4 ×10", false, &|r| (r.t, 10.0 * r.input[3])),
            ],
        ),
    )?);
    if rec.iter().any(|r| r.tube_max.is_finite()) {
        out.push(write(
            dir.join(format!("tube_{stem}.svg")),
            line_chart(
                "Tube and disturbance bound",
                "t (s)",
                "",
                &[
                    series("max s (state units)", false, &|r| (r.t, r.tube_max)),
                    series("max bound (rate units)", false, &|r| (r.t, r.set_bound.max())),
                ],
            ),
        )?);
    }
    Ok(out)
}
