// SPDX-License-Identifier: MIT OR Apache-2.0

//! The published 15-model × 3-benchmark master grid, shipped as a CSV
//! fixture that mirrors the source table column for column.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Result, TraceError};
use crate::invariant::Branch;

/// Benchmarks of the grid, in table order.
pub const BENCHMARKS: [&str; 3] = ["truthfulqa", "halueval_qa", "halueval_sum"];

pub const FIXTURE_MODELS: usize = 15;
pub const FIXTURE_CELLS: usize = FIXTURE_MODELS * BENCHMARKS.len();

const MASTER_GRID_CSV: &str = include_str!("../data/master_grid.csv");

/// One (model, benchmark) cell of the master grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureCell {
    pub model: String,
    pub benchmark: String,
    pub mc1_base: f64,
    pub mc1_delta: f64,
    pub mc2_base: f64,
    pub mc2_delta: f64,
    pub i_m: f64,
    pub branch: Branch,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    model: String,
    i_m: f64,
    branch: Branch,
    truthfulqa_mc1_base: Option<f64>,
    truthfulqa_mc1_delta: Option<f64>,
    truthfulqa_mc2_base: Option<f64>,
    truthfulqa_mc2_delta: Option<f64>,
    halueval_qa_mc1_base: Option<f64>,
    halueval_qa_mc1_delta: Option<f64>,
    halueval_qa_mc2_base: Option<f64>,
    halueval_qa_mc2_delta: Option<f64>,
    halueval_sum_mc1_base: Option<f64>,
    halueval_sum_mc1_delta: Option<f64>,
    halueval_sum_mc2_base: Option<f64>,
    halueval_sum_mc2_delta: Option<f64>,
}

impl Row {
    fn cells(self) -> Result<Vec<FixtureCell>> {
        let blocks = [
            (
                BENCHMARKS[0],
                [
                    self.truthfulqa_mc1_base,
                    self.truthfulqa_mc1_delta,
                    self.truthfulqa_mc2_base,
                    self.truthfulqa_mc2_delta,
                ],
            ),
            (
                BENCHMARKS[1],
                [
                    self.halueval_qa_mc1_base,
                    self.halueval_qa_mc1_delta,
                    self.halueval_qa_mc2_base,
                    self.halueval_qa_mc2_delta,
                ],
            ),
            (
                BENCHMARKS[2],
                [
                    self.halueval_sum_mc1_base,
                    self.halueval_sum_mc1_delta,
                    self.halueval_sum_mc2_base,
                    self.halueval_sum_mc2_delta,
                ],
            ),
        ];
        const METRICS: [&str; 4] = ["mc1_base", "mc1_delta", "mc2_base", "mc2_delta"];
        blocks
            .into_iter()
            .map(|(bench, vals)| {
                let mut got = [0.0; 4];
                for (k, v) in vals.into_iter().enumerate() {
                    got[k] = v.ok_or_else(|| {
                        TraceError::Fixture(format!(
                            "{} / {bench}: missing metric {}",
                            self.model, METRICS[k]
                        ))
                    })?;
                }
                Ok(FixtureCell {
                    model: self.model.clone(),
                    benchmark: bench.to_owned(),
                    mc1_base: got[0],
                    mc1_delta: got[1],
                    mc2_base: got[2],
                    mc2_delta: got[3],
                    i_m: self.i_m,
                    branch: self.branch,
                })
            })
            .collect()
    }
}

/// Parse a master-grid CSV. Requires exactly 45 complete cells.
pub fn parse_master_fixture(text: &str) -> Result<Vec<FixtureCell>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut cells = Vec::with_capacity(FIXTURE_CELLS);
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| TraceError::Fixture(e.to_string()))?;
        cells.extend(row.cells()?);
    }
    if cells.len() != FIXTURE_CELLS {
        return Err(TraceError::Fixture(format!(
            "expected {FIXTURE_CELLS} cells, found {}",
            cells.len()
        )));
    }
    Ok(cells)
}

pub fn load_master_fixture(path: &Path) -> Result<Vec<FixtureCell>> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceError::io(path, e))?;
    parse_master_fixture(&text)
}

/// The grid compiled into the crate.
pub fn master_fixture() -> Vec<FixtureCell> {
    parse_master_fixture(MASTER_GRID_CSV).expect("embedded fixture is well-formed")
}

pub fn master_fixture_csv() -> &'static str {
    MASTER_GRID_CSV
}
