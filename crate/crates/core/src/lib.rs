// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic cross-layer trajectory correction for candidate-restricted
//! multiple-choice scoring.
//!
//! Each item arrives as an `n × (L+1)` table of length-normalized
//! logit-lens log-probabilities. The engine measures how many candidate
//! directions are active in the mid-depth window and routes the item to a
//! gated decisive-layer override, to signed scalar mixing with a
//! trajectory-calibrated score, or to an earliest-state fallback, with the
//! last two selected per model by a weights-only invariant.

pub mod archive;
pub mod config;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod fixture;
pub mod geometry;
pub mod invariant;
pub mod model;
pub mod operators;
pub mod scorer;

pub use config::{AblationVariant, HyperParameters, ScorerParams};
pub use engine::{run_batch, run_item, Diagnostics, EngineConfig, Regime, Verdict};
pub use error::{Result, TraceError};
pub use invariant::{compute_invariant, resolve_invariant, Branch, InvariantReport};
pub use model::{ArchiveItem, CandidateTrajectory, DepthRecord, ModelWeightStats, PositionDepthLogits};
