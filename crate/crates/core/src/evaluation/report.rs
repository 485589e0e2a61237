// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV, JSON, and SVG report writers. All output is byte-deterministic.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::archive::to_pretty;
use crate::error::{Result, TraceError};
use crate::model::CandidateTrajectory;
use crate::operators::log_softmax;

use super::grid::CellResult;

pub const SVG_WIDTH: u32 = 800;
pub const SVG_HEIGHT: u32 = 400;
const MARGIN: f64 = 40.0;

/// One row per cell.
pub fn grid_csv(cells: &[CellResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model_id",
        "benchmark_id",
        "mc1_base",
        "mc1_trace",
        "mc1_delta",
        "mc2_base",
        "mc2_trace",
        "mc2_delta",
    ])
    .map_err(|e| TraceError::Evaluation(e.to_string()))?;
    for c in cells {
        let f = |x: f64| format!("{x:.4}");
        w.write_record([
            c.model_id.clone(),
            c.benchmark_id.clone(),
            f(c.mc1_base),
            f(c.mc1_trace),
            f(c.mc1_delta()),
            f(c.mc2_base),
            f(c.mc2_trace),
            f(c.mc2_delta()),
        ])
        .map_err(|e| TraceError::Evaluation(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| TraceError::Evaluation(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| TraceError::Evaluation(e.to_string()))
}

/// Pretty JSON with fixed float formatting.
pub fn structured<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut bytes = to_pretty(value)?;
    bytes.push(b'\n');
    String::from_utf8(bytes).map_err(|e| TraceError::Evaluation(e.to_string()))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Per-depth candidate probabilities (softmax over candidates at each
/// depth), one polyline per candidate, with a vertical marker at `marker`.
pub fn trajectory_svg(traj: &CandidateTrajectory, marker: usize) -> Result<String> {
    if marker > traj.depth {
        return Err(TraceError::Evaluation(format!(
            "marker depth {marker} exceeds L = {}",
            traj.depth
        )));
    }
    let w = SVG_WIDTH as f64;
    let h = SVG_HEIGHT as f64;
    let x_of = |l: usize| MARGIN + (w - 2.0 * MARGIN) * l as f64 / traj.depth as f64;
    let y_of = |p: f64| h - MARGIN - (h - 2.0 * MARGIN) * p;
    let probs: Vec<Vec<f64>> = (0..=traj.depth)
        .map(|l| log_softmax(&traj.layer(l)).into_iter().map(f64::exp).collect())
        .collect();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(&traj.item_id));
    let _ = writeln!(
        s,
        r#"<rect x="{m:.3}" y="{m:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="gray"/>"#,
        w - 2.0 * MARGIN,
        h - 2.0 * MARGIN,
        m = MARGIN
    );
    for i in 0..traj.n {
        let points: Vec<String> = (0..=traj.depth)
            .map(|l| format!("{:.3},{:.3}", x_of(l), y_of(probs[l][i])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="candidate" data-index="{i}" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            PALETTE[i % PALETTE.len()],
            points.join(" ")
        );
    }
    let _ = writeln!(
        s,
        r#"<line class="marker" data-depth="{marker}" x1="{x:.3}" y1="{:.3}" x2="{x:.3}" y2="{:.3}" stroke="black" stroke-dasharray="4 3"/>"#,
        MARGIN,
        h - MARGIN,
        x = x_of(marker)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_report(contents: &str, path: &Path) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| TraceError::io(path, e))
}
