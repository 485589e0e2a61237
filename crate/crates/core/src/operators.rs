// SPDX-License-Identifier: MIT OR Apache-2.0

//! Correction operators over candidate score vectors.
//!
//! Every argmax in this crate breaks ties toward the lowest candidate index.

use serde::{Deserialize, Serialize};

use crate::config::HyperParameters;
use crate::error::{Result, TraceError};
use crate::model::CandidateTrajectory;

/// Index of the maximum, lowest index among ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `u₍₁₎ − u₍₂₎`, the gap between the two largest entries.
pub fn top_two_margin(v: &[f64]) -> f64 {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &x in v {
        if x > first {
            second = first;
            first = x;
        } else if x > second {
            second = x;
        }
    }
    first - second
}

/// Numerically stable `log Σ exp`.
pub fn logsumexp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log softmax(v)`.
pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let lse = logsumexp(v);
    v.iter().map(|x| x - lse).collect()
}

/// Candidate-restricted softmax, top-two margin and entropy (nats) of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub probs: Vec<f64>,
    pub margin: f64,
    pub entropy: f64,
}

pub fn layer_stats(scores: &[f64]) -> Result<LayerStats> {
    if scores.len() < 2 {
        return Err(TraceError::Numeric(format!(
            "layer statistics need at least 2 candidates, got {}",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(TraceError::Numeric("non-finite layer score".into()));
    }
    let logp = log_softmax(scores);
    let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let entropy = -probs
        .iter()
        .zip(&logp)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, l)| p * l)
        .sum::<f64>();
    Ok(LayerStats {
        probs,
        margin: top_two_margin(scores),
        entropy: entropy.max(0.0),
    })
}

/// Layer statistics for every depth `0..=L`.
pub fn trajectory_stats(traj: &CandidateTrajectory) -> Result<Vec<LayerStats>> {
    (0..=traj.depth).map(|l| layer_stats(&traj.layer(l))).collect()
}

/// The sharpest layer and its candidate log-distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisiveLayer {
    pub layer: usize,
    /// `m_ℓ / (H_ℓ + ε_H)` at the chosen layer.
    pub sharpness: f64,
    /// `q = log π_ℓ*`.
    pub q: Vec<f64>,
}

/// Maximize `m_ℓ / (H_ℓ + ε_H)` over `ℓ ∈ 1..=L`; ties go to the smaller layer.
pub fn decisive_layer_from_stats(stats: &[LayerStats], eps_h: f64) -> DecisiveLayer {
    let mut best = 1;
    let mut best_d = f64::NEG_INFINITY;
    for (l, st) in stats.iter().enumerate().skip(1) {
        let d = st.margin / (st.entropy + eps_h);
        if d > best_d {
            best = l;
            best_d = d;
        }
    }
    DecisiveLayer {
        layer: best,
        sharpness: best_d,
        q: stats[best].probs.iter().map(|p| p.ln()).collect(),
    }
}

pub fn decisive_layer(traj: &CandidateTrajectory, eps_h: f64) -> Result<DecisiveLayer> {
    let stats = trajectory_stats(traj)?;
    Ok(decisive_layer_from_stats(&stats, eps_h))
}

/// Outcome of the three candidate-space override checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    /// The override changes the top candidate.
    pub flip: bool,
    /// `log(max_mid m_ℓ / max(|m_L|, δ_r))`; `-inf` when every mid margin is 0.
    pub g_logr: f64,
    /// `H_L / log n`.
    pub g_h: f64,
    pub kappa: bool,
}

impl GateReport {
    pub fn evaluate(
        flip: bool,
        mid_max_margin: f64,
        final_margin: f64,
        final_entropy: f64,
        n: usize,
        hp: &HyperParameters,
    ) -> Self {
        let g_logr = (mid_max_margin / final_margin.abs().max(hp.delta_r)).ln();
        let g_h = final_entropy / (n as f64).ln();
        let kappa = flip && g_logr > hp.tau_logr && g_h > hp.tau_h;
        Self {
            flip,
            g_logr,
            g_h,
            kappa,
        }
    }
}

pub fn md_gate_from_stats(
    stats: &[LayerStats],
    base: &[f64],
    q: &[f64],
    mid: &[usize],
    hp: &HyperParameters,
) -> GateReport {
    let depth = stats.len() - 1;
    let mid_max = mid
        .iter()
        .map(|&l| stats[l].margin)
        .fold(f64::NEG_INFINITY, f64::max);
    let flip = argmax(q) != argmax(base);
    GateReport::evaluate(
        flip,
        mid_max,
        stats[depth].margin,
        stats[depth].entropy,
        base.len(),
        hp,
    )
}

pub fn md_gate(
    traj: &CandidateTrajectory,
    q: &[f64],
    mid: &[usize],
    hp: &HyperParameters,
) -> Result<GateReport> {
    let stats = trajectory_stats(traj)?;
    Ok(md_gate_from_stats(&stats, &traj.base(), q, mid, hp))
}

/// Signed mixing coefficient: `±η` when `t` is sharper than `b`, else 0.
pub fn scalar_lambda(base: &[f64], summary: &[f64], eta: f64) -> f64 {
    if top_two_margin(summary) > top_two_margin(base) {
        let ib = argmax(base);
        if summary[ib] - base[ib] > 0.0 {
            eta
        } else {
            -eta
        }
    } else {
        0.0
    }
}

/// `(1 − λ)b + λt`.
pub fn scalar_mix(base: &[f64], summary: &[f64], lambda: f64) -> Vec<f64> {
    base.iter()
        .zip(summary)
        .map(|(b, t)| (1.0 - lambda) * b + lambda * t)
        .collect()
}

/// Returns `(s₀, true)` when `max b < γ`, else `(b, false)`.
pub fn early_fallback(base: &[f64], layer0: &[f64], gamma_conf: f64) -> (Vec<f64>, bool) {
    let top = base.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top < gamma_conf {
        (layer0.to_vec(), true)
    } else {
        (base.to_vec(), false)
    }
}
