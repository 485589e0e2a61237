// SPDX-License-Identifier: MIT OR Apache-2.0

//! Accuracy metrics, grid aggregation, resampling statistics, usage, and
//! report output.

pub mod grid;
pub mod metrics;
pub mod report;
pub mod stats;
pub mod usage;

pub use grid::{aggregate_grid, score_cells, summarize_cells, CellResult, DeltaSummary, GridSummary};
pub use metrics::{mc1, mc2};
pub use report::{grid_csv, structured, trajectory_svg, write_report};
pub use stats::{bootstrap_ci, binomial_upper_tail, sign_test, Interval};
pub use usage::{usage_report, usage_stats, UsageReport, UsageStats};
