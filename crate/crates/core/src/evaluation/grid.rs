// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-cell accuracies and the model-by-benchmark summary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::Verdict;
use crate::error::{Result, TraceError};
use crate::fixture::{FixtureCell, FIXTURE_CELLS};
use crate::model::ArchiveItem;

use super::metrics::{mc1, mc2};

/// Accuracies of one model on one benchmark, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model_id: String,
    pub benchmark_id: String,
    pub mc1_base: f64,
    pub mc1_trace: f64,
    pub mc2_base: f64,
    pub mc2_trace: f64,
}

impl CellResult {
    pub fn mc1_delta(&self) -> f64 {
        self.mc1_trace - self.mc1_base
    }

    pub fn mc2_delta(&self) -> f64 {
        self.mc2_trace - self.mc2_base
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mc1_base", self.mc1_base),
            ("mc1_trace", self.mc1_trace),
            ("mc2_base", self.mc2_base),
            ("mc2_trace", self.mc2_trace),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return Err(TraceError::Evaluation(format!(
                    "{}/{}: {name} = {v} outside [0, 100]",
                    self.model_id, self.benchmark_id
                )));
            }
        }
        Ok(())
    }
}

impl From<&FixtureCell> for CellResult {
    fn from(c: &FixtureCell) -> Self {
        Self {
            model_id: c.model.clone(),
            benchmark_id: c.benchmark.clone(),
            mc1_base: c.mc1_base,
            mc1_trace: c.mc1_base + c.mc1_delta,
            mc2_base: c.mc2_base,
            mc2_trace: c.mc2_base + c.mc2_delta,
        }
    }
}

/// Score a verdict stream against its labeled items, one cell per benchmark.
///
/// Base accuracy uses the final-layer scores; corrected accuracy uses each
/// verdict's `final_scores`.
pub fn score_cells(model_id: &str, items: &[ArchiveItem], verdicts: &[Verdict]) -> Result<Vec<CellResult>> {
    if items.len() != verdicts.len() {
        return Err(TraceError::Evaluation(format!(
            "{} items but {} verdicts",
            items.len(),
            verdicts.len()
        )));
    }
    #[derive(Default)]
    struct Acc {
        count: usize,
        mc1_base: u64,
        mc1_trace: u64,
        mc2_base: f64,
        mc2_trace: f64,
    }
    let mut by_bench: BTreeMap<&str, Acc> = BTreeMap::new();
    for (item, v) in items.iter().zip(verdicts) {
        let traj = &item.trajectory;
        if traj.item_id != v.item_id {
            return Err(TraceError::Evaluation(format!(
                "verdict {} does not match item {}",
                v.item_id, traj.item_id
            )));
        }
        let truthful = traj.truthful_indices.as_deref().ok_or_else(|| {
            TraceError::Evaluation(format!("item {} has no truthful_indices", traj.item_id))
        })?;
        if v.final_scores.len() != traj.n {
            return Err(TraceError::Evaluation(format!(
                "verdict {} has {} scores for {} candidates",
                v.item_id,
                v.final_scores.len(),
                traj.n
            )));
        }
        let base = traj.base();
        let acc = by_bench.entry(traj.benchmark_id.as_str()).or_default();
        acc.count += 1;
        acc.mc1_base += u64::from(mc1(&base, truthful));
        acc.mc1_trace += u64::from(mc1(&v.final_scores, truthful));
        acc.mc2_base += mc2(&base, truthful);
        acc.mc2_trace += mc2(&v.final_scores, truthful);
    }
    Ok(by_bench
        .into_iter()
        .map(|(bench, a)| {
            let pct = 100.0 / a.count as f64;
            CellResult {
                model_id: model_id.to_owned(),
                benchmark_id: bench.to_owned(),
                mc1_base: a.mc1_base as f64 * pct,
                mc1_trace: a.mc1_trace as f64 * pct,
                mc2_base: a.mc2_base * pct,
                mc2_trace: a.mc2_trace * pct,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Cell attaining `max` (first in input order).
    pub max_cell: (String, String),
    /// Cells with delta ≤ 0.
    pub regressions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub cells: usize,
    pub mc1: DeltaSummary,
    pub mc2: DeltaSummary,
}

fn summarize(cells: &[CellResult], delta: impl Fn(&CellResult) -> f64) -> DeltaSummary {
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut max_cell = (String::new(), String::new());
    let mut regressions = 0;
    for c in cells {
        let d = delta(c);
        sum += d;
        min = min.min(d);
        if d > max {
            max = d;
            max_cell = (c.model_id.clone(), c.benchmark_id.clone());
        }
        if d <= 0.0 {
            regressions += 1;
        }
    }
    DeltaSummary { mean: sum / cells.len() as f64, min, max, max_cell, regressions }
}

/// Summarize a full grid of exactly 45 cells.
pub fn aggregate_grid(cells: &[CellResult]) -> Result<GridSummary> {
    if cells.len() != FIXTURE_CELLS {
        return Err(TraceError::Evaluation(format!(
            "grid needs {FIXTURE_CELLS} cells, got {}",
            cells.len()
        )));
    }
    summarize_cells(cells)
}

/// Summarize any non-empty set of cells.
pub fn summarize_cells(cells: &[CellResult]) -> Result<GridSummary> {
    if cells.is_empty() {
        return Err(TraceError::Evaluation("no cells to summarize".into()));
    }
    for c in cells {
        c.validate()?;
    }
    Ok(GridSummary {
        cells: cells.len(),
        mc1: summarize(cells, CellResult::mc1_delta),
        mc2: summarize(cells, CellResult::mc2_delta),
    })
}
