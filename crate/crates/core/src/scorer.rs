// SPDX-License-Identifier: MIT OR Apache-2.0

//! Trajectory scorer: a second answer-level view `t` built from sparse
//! per-depth logits.
//!
//! At every continuation position the scorer keeps tokens that recur in
//! the top-k of at least `r_Ω` anchor depths, measures how their
//! log-probability evolves over the feature depths, and blends a
//! depth-weighted anchor logit into the final-layer logit with a weight
//! that grows with that evidence. Tokens outside the mix set keep their
//! final-layer logit, so the softmax denominator only needs the final
//! log-sum-exp plus corrections for the mixed tokens.
//!
//! The mix set is `Ω' ∪ {own token}` where `Ω'` is the recurrence set
//! restricted to tokens whose logit is stored at every required depth.
//! Evidence is min-max normalized over `Ω'` when non-empty, otherwise over
//! every fully observed stored token plus the own token; values outside
//! the scope's range are clamped to `[0, 1]`.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::{ceil_fraction, FeatureWeights, ScorerParams};
use crate::error::{Result, TraceError};
use crate::model::{ArchiveItem, DepthRecord, PositionDepthLogits};

/// Min-max ranges narrower than this normalize to 0.
pub const DEGENERATE_RANGE: f64 = 1e-12;

/// `min{L, ⌈fL⌉}`.
pub fn depth_index(fraction: f64, depth: usize) -> usize {
    ceil_fraction(fraction, depth).min(depth)
}

/// Anchor and feature layers for one model depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerDepths {
    pub depth: usize,
    /// Distinct anchor layers, ascending.
    pub anchors: Vec<usize>,
    /// Distinct feature layers, ascending.
    pub features: Vec<usize>,
    /// `∝ exp(ℓ/L)` over `anchors`, summing to 1.
    pub anchor_weights: Vec<f64>,
}

impl ScorerDepths {
    pub fn new(params: &ScorerParams, depth: usize) -> Result<Self> {
        let collect = |fracs: &[f64]| -> Vec<usize> {
            let set: BTreeSet<usize> = fracs.iter().map(|&f| depth_index(f, depth)).collect();
            set.into_iter().collect()
        };
        let anchors = collect(&params.anchor_fractions);
        let features = collect(&params.feature_fractions);
        if features.len() < 3 {
            return Err(TraceError::Config(format!(
                "L = {depth} yields only {} distinct feature depths; curvature needs 3",
                features.len()
            )));
        }
        if params.r_omega > anchors.len() {
            return Err(TraceError::Config(format!(
                "L = {depth} yields {} distinct anchors, fewer than r_omega = {}",
                anchors.len(),
                params.r_omega
            )));
        }
        let raw: Vec<f64> = anchors
            .iter()
            .map(|&l| (l as f64 / depth as f64).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            depth,
            anchors,
            features,
            anchor_weights: raw.into_iter().map(|w| w / total).collect(),
        })
    }

    /// `A ∪ G ∪ {L}`.
    pub fn required(&self) -> BTreeSet<usize> {
        self.anchors
            .iter()
            .chain(&self.features)
            .copied()
            .chain(std::iter::once(self.depth))
            .collect()
    }
}

/// Tokens present in at least `r_omega` of the given top-k sets.
pub fn recurrence_filter<'a, I>(topk_sets: I, r_omega: usize) -> BTreeSet<u32>
where
    I: IntoIterator<Item = &'a [u32]>,
{
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for set in topk_sets {
        let unique: BTreeSet<u32> = set.iter().copied().collect();
        for tok in unique {
            *counts.entry(tok).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter(|&(_, c)| c >= r_omega)
        .map(|(t, _)| t)
        .collect()
}

/// Cross-depth features of one log-probability trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceFeatures {
    pub slope: f64,
    pub jump: f64,
    pub curv: f64,
}

/// Least-squares slope over `x_j = (j−1)/(|G|−1)`, largest consecutive
/// increase, and mean second difference.
pub fn trajectory_features(p: &[f64]) -> Result<TraceFeatures> {
    let g = p.len();
    if g < 3 {
        return Err(TraceError::Config(format!(
            "trajectory features need at least 3 depths, got {g}"
        )));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(TraceError::Numeric("non-finite log-probability trace".into()));
    }
    let xs: Vec<f64> = (0..g).map(|j| j as f64 / (g - 1) as f64).collect();
    let x_mean = xs.iter().sum::<f64>() / g as f64;
    let p_mean = p.iter().sum::<f64>() / g as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, v) in xs.iter().zip(p) {
        sxy += (x - x_mean) * (v - p_mean);
        sxx += (x - x_mean) * (x - x_mean);
    }
    let jump = p
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let curv = p.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).sum::<f64>() / (g - 2) as f64;
    Ok(TraceFeatures {
        slope: sxy / sxx,
        jump,
        curv,
    })
}

/// `β_s[slope]₊ + β_j[jump]₊ + β_c[curv]₊`.
pub fn evidence(f: TraceFeatures, w: &FeatureWeights) -> f64 {
    w.slope * f.slope.max(0.0) + w.jump * f.jump.max(0.0) + w.curv * f.curv.max(0.0)
}

/// Min-max normalization into `[0, 1]`; a degenerate range maps to all zeros.
pub fn normalize_evidence(h: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(h);
    h.iter().map(|&v| normalize_with(v, lo, hi)).collect()
}

fn min_max(h: &[f64]) -> (f64, f64) {
    h.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

fn normalize_with(v: f64, lo: f64, hi: f64) -> f64 {
    if !(hi - lo >= DEGENERATE_RANGE) {
        0.0
    } else {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `λ₀ + (1 − λ₀)·σ(γ(h̃ − ½))`.
pub fn adaptive_alpha(h_norm: f64, lambda0: f64, gamma_sig: f64) -> f64 {
    lambda0 + (1.0 - lambda0) * sigmoid(gamma_sig * (h_norm - 0.5))
}

/// One token whose logit was recalibrated at a position.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedToken {
    pub token: u32,
    pub z_final: f64,
    pub z_anchor: f64,
    pub evidence: f64,
    pub h_norm: f64,
    pub alpha: f64,
    pub z_calibrated: f64,
}

/// Calibrated logits at one continuation position.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedPosition {
    pub own_token: u32,
    /// Recurrence set before the full-observation restriction.
    pub omega: BTreeSet<u32>,
    pub mixed: Vec<MixedToken>,
    pub lse_final: f64,
    pub lse_calibrated: f64,
    /// `1 − Σ_mixed exp(z_L − lse_L)`: final-layer mass of untouched tokens.
    pub tail_mass: f64,
}

impl CalibratedPosition {
    pub fn own(&self) -> &MixedToken {
        self.mixed
            .iter()
            .find(|m| m.token == self.own_token)
            .expect("own token is always mixed")
    }

    /// `log softmax(z^T)` at the own token.
    pub fn own_log_prob(&self) -> f64 {
        self.own().z_calibrated - self.lse_calibrated
    }
}

struct PositionView<'a> {
    rec: &'a PositionDepthLogits,
    by_depth: BTreeMap<usize, &'a DepthRecord>,
}

impl<'a> PositionView<'a> {
    fn new(rec: &'a PositionDepthLogits, required: &BTreeSet<usize>) -> Result<Self> {
        let mut by_depth = BTreeMap::new();
        for &d in required {
            let r = rec.at_depth(d).ok_or_else(|| {
                TraceError::Numeric(format!(
                    "candidate {}, position {}: missing depth record {d}",
                    rec.candidate_index, rec.position
                ))
            })?;
            by_depth.insert(d, r);
        }
        Ok(Self { rec, by_depth })
    }

    fn logit(&self, token: u32, depth: usize) -> Option<f64> {
        let d = self.by_depth[&depth];
        if token == self.rec.own_token_id {
            Some(d.own_logit)
        } else {
            d.logit_of(token)
        }
    }

    fn fully_observed(&self, token: u32) -> bool {
        self.by_depth.keys().all(|&d| self.logit(token, d).is_some())
    }
}

/// Recalibrate one position's logits.
pub fn calibrate_position(
    rec: &PositionDepthLogits,
    depths: &ScorerDepths,
    params: &ScorerParams,
) -> Result<CalibratedPosition> {
    let required = depths.required();
    let view = PositionView::new(rec, &required)?;
    let own = rec.own_token_id;

    let omega = recurrence_filter(
        depths
            .anchors
            .iter()
            .map(|d| view.by_depth[d].topk_ids.as_slice()),
        params.r_omega,
    );
    let omega_obs: BTreeSet<u32> = omega
        .iter()
        .copied()
        .filter(|&t| view.fully_observed(t))
        .collect();
    let mut mix = omega_obs.clone();
    mix.insert(own);

    let token_evidence = |tok: u32| -> Result<f64> {
        let trace: Vec<f64> = depths
            .features
            .iter()
            .map(|&g| view.logit(tok, g).expect("fully observed") - view.by_depth[&g].logsumexp_full)
            .collect();
        Ok(evidence(trajectory_features(&trace)?, &params.feature_weights))
    };

    let mut h: BTreeMap<u32, f64> = BTreeMap::new();
    for &tok in &mix {
        h.insert(tok, token_evidence(tok)?);
    }
    let (lo, hi) = if !omega_obs.is_empty() {
        min_max(&omega_obs.iter().map(|t| h[t]).collect::<Vec<_>>())
    } else {
        let mut scope: BTreeSet<u32> = required
            .iter()
            .flat_map(|d| view.by_depth[d].topk_ids.iter().copied())
            .filter(|&t| view.fully_observed(t))
            .collect();
        scope.insert(own);
        let mut vals = Vec::with_capacity(scope.len());
        for tok in scope {
            vals.push(match h.get(&tok) {
                Some(&v) => v,
                None => token_evidence(tok)?,
            });
        }
        min_max(&vals)
    };

    let lse_final = view.by_depth[&depths.depth].logsumexp_full;
    let mut mixed = Vec::with_capacity(mix.len());
    for &tok in &mix {
        let z_final = view.logit(tok, depths.depth).expect("fully observed");
        let z_anchor: f64 = depths
            .anchors
            .iter()
            .zip(&depths.anchor_weights)
            .map(|(&a, w)| w * view.logit(tok, a).expect("fully observed"))
            .sum();
        let h_norm = normalize_with(h[&tok], lo, hi);
        let alpha = adaptive_alpha(h_norm, params.lambda0, params.gamma_sig);
        mixed.push(MixedToken {
            token: tok,
            z_final,
            z_anchor,
            evidence: h[&tok],
            h_norm,
            alpha,
            z_calibrated: (1.0 - alpha) * z_final + alpha * z_anchor,
        });
    }

    let tail_mass = (1.0
        - mixed
            .iter()
            .map(|m| (m.z_final - lse_final).exp())
            .sum::<f64>())
    .max(0.0);
    let shift = mixed
        .iter()
        .map(|m| m.z_calibrated)
        .fold(lse_final, f64::max);
    let total = tail_mass * (lse_final - shift).exp()
        + mixed
            .iter()
            .map(|m| (m.z_calibrated - shift).exp())
            .sum::<f64>();

    Ok(CalibratedPosition {
        own_token: own,
        omega,
        mixed,
        lse_final,
        lse_calibrated: shift + total.ln(),
        tail_mass,
    })
}

/// Per-candidate trajectory scores and the base scores recomputed from the
/// same records.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScores {
    pub t: Vec<f64>,
    pub b_check: Vec<f64>,
}

/// Score every candidate of `item` from its position-depth logits.
pub fn calibrated_candidate_scores(item: &ArchiveItem, params: &ScorerParams) -> Result<CandidateScores> {
    let traj = &item.trajectory;
    let depths = ScorerDepths::new(params, traj.depth)?;
    let mut t = vec![0.0; traj.n];
    let mut b = vec![0.0; traj.n];
    let mut seen = vec![0usize; traj.n];
    for rec in &item.logits {
        let c = rec.candidate_index;
        if c >= traj.n {
            return Err(TraceError::Input {
                item_id: traj.item_id.clone(),
                message: format!("logit record for unknown candidate {c}"),
            });
        }
        let pos = calibrate_position(rec, &depths, params).map_err(|e| TraceError::Input {
            item_id: traj.item_id.clone(),
            message: e.to_string(),
        })?;
        t[c] += pos.own_log_prob();
        b[c] += pos.own().z_final - pos.lse_final;
        seen[c] += 1;
    }
    for c in 0..traj.n {
        let m = traj.candidate_token_counts[c];
        if seen[c] != m {
            return Err(TraceError::Input {
                item_id: traj.item_id.clone(),
                message: format!("candidate {c}: {} of {m} positions have logit records", seen[c]),
            });
        }
        t[c] /= m as f64;
        b[c] /= m as f64;
    }
    Ok(CandidateScores { t, b_check: b })
}
