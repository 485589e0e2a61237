// SPDX-License-Identifier: MIT OR Apache-2.0

//! Data model for candidate trajectories and the sparse per-depth logits
//! that feed the trajectory scorer.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};

/// Length-normalized layerwise log-probabilities of `n` candidates across
/// depths `0..=L`, stored row-major (`n` rows of `L + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTrajectory {
    pub item_id: String,
    pub benchmark_id: String,
    pub n: usize,
    /// Transformer depth `L`; the trajectory has `L + 1` columns.
    pub depth: usize,
    pub scores: Vec<f64>,
    pub candidate_texts: Vec<String>,
    pub candidate_token_counts: Vec<usize>,
    /// Evaluation label; absent for unlabeled runs.
    pub truthful_indices: Option<Vec<usize>>,
}

impl CandidateTrajectory {
    pub fn columns(&self) -> usize {
        self.depth + 1
    }

    #[inline]
    pub fn score(&self, candidate: usize, layer: usize) -> f64 {
        self.scores[candidate * self.columns() + layer]
    }

    /// Score vector `s_ℓ` over candidates at depth `layer`.
    pub fn layer(&self, layer: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.score(i, layer)).collect()
    }

    /// The final-layer base score `b = s_L`.
    pub fn base(&self) -> Vec<f64> {
        self.layer(self.depth)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(TraceError::validation(&self.item_id, field, msg));
        if self.n < 2 {
            return bad("n", format!("candidate count {} < 2", self.n));
        }
        if self.depth < 2 {
            return bad("L", format!("depth {} < 2", self.depth));
        }
        let expected = self.n * self.columns();
        if self.scores.len() != expected {
            return bad(
                "S",
                format!("expected {} entries (n x (L+1)), found {}", expected, self.scores.len()),
            );
        }
        for (k, &s) in self.scores.iter().enumerate() {
            let (i, l) = (k / self.columns(), k % self.columns());
            if !s.is_finite() {
                return bad("S", format!("non-finite entry at candidate {i}, depth {l}"));
            }
            if s > 0.0 {
                return bad(
                    "S",
                    format!("log-probability > 0 at candidate {i}, depth {l}: {s}"),
                );
            }
        }
        if self.candidate_texts.len() != self.n {
            return bad(
                "candidate_texts",
                format!("expected {} texts, found {}", self.n, self.candidate_texts.len()),
            );
        }
        if self.candidate_token_counts.len() != self.n {
            return bad(
                "candidate_token_counts",
                format!(
                    "expected {} counts, found {}",
                    self.n,
                    self.candidate_token_counts.len()
                ),
            );
        }
        if let Some(i) = self.candidate_token_counts.iter().position(|&m| m == 0) {
            return bad("candidate_token_counts", format!("candidate {i} has zero tokens"));
        }
        if let Some(truthful) = &self.truthful_indices {
            if truthful.is_empty() {
                return bad("truthful_indices", "empty truthful set".into());
            }
            let unique: BTreeSet<_> = truthful.iter().copied().collect();
            if unique.len() != truthful.len() {
                return bad("truthful_indices", "duplicate index".into());
            }
            if let Some(&i) = unique.iter().find(|&&i| i >= self.n) {
                return bad("truthful_indices", format!("index {i} out of range"));
            }
            if unique.len() == self.n {
                return bad(
                    "truthful_indices",
                    "every candidate is truthful; the set must be a strict subset".into(),
                );
            }
        }
        Ok(())
    }
}

/// Sparse logits read at one depth for one continuation position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthRecord {
    pub depth: usize,
    pub topk_ids: Vec<u32>,
    /// Raw logits aligned with `topk_ids`.
    pub topk_logits: Vec<f64>,
    /// Log-sum-exp of the full-vocabulary logit vector at this depth.
    pub logsumexp_full: f64,
    /// Raw logit of the candidate's own token at this depth.
    pub own_logit: f64,
}

impl DepthRecord {
    pub fn logit_of(&self, token: u32) -> Option<f64> {
        self.topk_ids
            .iter()
            .position(|&t| t == token)
            .map(|k| self.topk_logits[k])
    }
}

/// Per-depth records for continuation position `position` (1-based) of
/// candidate `candidate_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionDepthLogits {
    pub candidate_index: usize,
    pub position: usize,
    pub own_token_id: u32,
    pub depths: Vec<DepthRecord>,
}

impl PositionDepthLogits {
    pub fn at_depth(&self, depth: usize) -> Option<&DepthRecord> {
        self.depths.iter().find(|d| d.depth == depth)
    }
}

/// One archive line: a trajectory plus its (possibly omitted) scorer inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveItem {
    pub trajectory: CandidateTrajectory,
    /// Empty when the item was stored without scorer inputs.
    pub logits: Vec<PositionDepthLogits>,
}

impl ArchiveItem {
    pub fn new(trajectory: CandidateTrajectory) -> Self {
        Self {
            trajectory,
            logits: Vec::new(),
        }
    }

    pub fn item_id(&self) -> &str {
        &self.trajectory.item_id
    }

    pub fn has_logits(&self) -> bool {
        !self.logits.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        if self.logits.is_empty() {
            return Ok(());
        }
        let traj = &self.trajectory;
        let bad = |msg: String| {
            Err(TraceError::validation(
                &traj.item_id,
                "position_depth_logits",
                msg,
            ))
        };

        let mut seen = HashSet::new();
        let mut k_cut: Option<usize> = None;
        for rec in &self.logits {
            let c = rec.candidate_index;
            if c >= traj.n {
                return bad(format!("candidate_index {c} out of range"));
            }
            let m = traj.candidate_token_counts[c];
            if rec.position == 0 || rec.position > m {
                return bad(format!(
                    "candidate {c}: position {} outside 1..={m}",
                    rec.position
                ));
            }
            if !seen.insert((c, rec.position)) {
                return bad(format!("candidate {c}: duplicate position {}", rec.position));
            }
            let mut depths = HashSet::new();
            for d in &rec.depths {
                let at = format!("candidate {c}, position {}, depth {}", rec.position, d.depth);
                if d.depth > traj.depth {
                    return bad(format!("{at}: depth exceeds L = {}", traj.depth));
                }
                if !depths.insert(d.depth) {
                    return bad(format!("{at}: depth recorded twice"));
                }
                if d.topk_ids.len() != d.topk_logits.len() {
                    return bad(format!("{at}: topk_ids and topk_logits differ in length"));
                }
                if *k_cut.get_or_insert(d.topk_ids.len()) != d.topk_ids.len() {
                    return bad(format!("{at}: inconsistent top-k size"));
                }
                let ids: HashSet<_> = d.topk_ids.iter().collect();
                if ids.len() != d.topk_ids.len() {
                    return bad(format!("{at}: duplicate token in topk_ids"));
                }
                let finite = d.logsumexp_full.is_finite()
                    && d.own_logit.is_finite()
                    && d.topk_logits.iter().all(|z| z.is_finite());
                if !finite {
                    return bad(format!("{at}: non-finite logit"));
                }
                if d.own_logit > d.logsumexp_full {
                    return bad(format!("{at}: own_logit exceeds logsumexp_full"));
                }
            }
        }
        let expected: usize = traj.candidate_token_counts.iter().sum();
        if seen.len() != expected {
            return bad(format!(
                "records cover {} of {expected} continuation positions",
                seen.len()
            ));
        }
        Ok(())
    }

    /// Checks that every position carries exactly the depth set `required`.
    pub fn validate_depth_cover(&self, required: &BTreeSet<usize>) -> Result<()> {
        for rec in &self.logits {
            let have: BTreeSet<usize> = rec.depths.iter().map(|d| d.depth).collect();
            if &have != required {
                return Err(TraceError::validation(
                    self.item_id(),
                    "position_depth_logits",
                    format!(
                        "candidate {}, position {}: depths {:?} do not match required {:?}",
                        rec.candidate_index, rec.position, have, required
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Weight statistics from which the weights-only invariant is computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelWeightStats {
    pub model_id: String,
    #[serde(rename = "L")]
    pub depth: usize,
    pub vocab_size: usize,
    /// Row L2 norms of the early-layer key projection.
    pub row_norms_k_e: Vec<f64>,
    /// Row L2 norms of the early-layer value projection.
    pub row_norms_v_e: Vec<f64>,
    /// Row L2 norms of the mid-layer value projection.
    pub row_norms_v_m: Vec<f64>,
    /// Row L2 norms of the mid-layer output projection.
    pub row_norms_o_m: Vec<f64>,
    /// `‖w_N‖₁` of the final normalization weight.
    pub final_norm_l1: f64,
    pub final_norm_dim: usize,
    /// Cached invariant, if already computed for this model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant: Option<crate::invariant::InvariantReport>,
}

impl ModelWeightStats {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(TraceError::validation(&self.model_id, field, msg));
        for (name, seq) in [
            ("row_norms_k_e", &self.row_norms_k_e),
            ("row_norms_v_e", &self.row_norms_v_e),
            ("row_norms_v_m", &self.row_norms_v_m),
            ("row_norms_o_m", &self.row_norms_o_m),
        ] {
            if seq.is_empty() {
                return bad(name, "empty row-norm sequence");
            }
            if seq.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return bad(name, "row norms must be finite and non-negative");
            }
            if seq.iter().sum::<f64>() <= 0.0 {
                return bad(name, "row norms must have positive mean");
            }
        }
        if !(self.final_norm_l1.is_finite() && self.final_norm_l1 >= 0.0) {
            return bad("final_norm_l1", "must be finite and non-negative");
        }
        if self.final_norm_dim == 0 {
            return bad("final_norm_dim", "must be at least 1");
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TraceError::io(path, e))?;
        let stats: Self = serde_json::from_str(&text).map_err(|e| TraceError::Parse {
            path: path.to_owned(),
            line: e.line(),
            message: e.to_string(),
        })?;
        stats.validate()?;
        Ok(stats)
    }
}
