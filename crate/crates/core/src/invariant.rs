// SPDX-License-Identifier: MIT OR Apache-2.0

//! Weights-only model invariant.
//!
//! `I(M) = (φ_N·φ_O) / (φ_K·φ_V)` compares late evidence amplification
//! against early routing dominance. Models above `τ_I` use signed scalar
//! mixing in the one-directional regime, the rest use earliest-state
//! fallback.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{floor_fraction, HyperParameters};
use crate::error::{Result, TraceError};
use crate::model::ModelWeightStats;

/// Scalar-regime operator selected by the invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Mix,
    Early,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mix => "mix",
            Self::Early => "early",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantReport {
    pub phi_n: f64,
    pub phi_k: f64,
    pub phi_v: f64,
    pub phi_o: f64,
    pub i_m: f64,
    pub branch: Branch,
}

/// Row coefficient of variation: population standard deviation of the row
/// norms over their mean.
pub fn rcv(row_norms: &[f64]) -> Result<f64> {
    if row_norms.is_empty() {
        return Err(TraceError::Numeric("rcv of an empty row-norm sequence".into()));
    }
    let n = row_norms.len() as f64;
    let mean = row_norms.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(TraceError::Numeric(
            "rcv undefined: row norms have zero mean".into(),
        ));
    }
    if row_norms.iter().all(|&v| v == row_norms[0]) {
        return Ok(0.0);
    }
    let var = row_norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

/// Early and mid structural layers `(⌊ρ_e L⌋, ⌊ρ_m L⌋)`.
pub fn structural_depths(depth: usize, hp: &HyperParameters) -> (usize, usize) {
    (floor_fraction(hp.rho_e, depth), floor_fraction(hp.rho_m, depth))
}

pub fn branch_for(i_m: f64, tau_i: f64) -> Branch {
    if i_m > tau_i {
        Branch::Mix
    } else {
        Branch::Early
    }
}

pub fn compute_invariant(stats: &ModelWeightStats, hp: &HyperParameters) -> Result<InvariantReport> {
    stats.validate()?;
    let phi_n = stats.final_norm_l1 / stats.final_norm_dim as f64;
    let phi_k = rcv(&stats.row_norms_k_e)?;
    let rcv_v_mid = rcv(&stats.row_norms_v_m)?;
    if rcv_v_mid == 0.0 {
        return Err(TraceError::Numeric(format!(
            "{}: mid-layer value projection has equal row norms (rcv = 0); phi_V is undefined",
            stats.model_id
        )));
    }
    let phi_v = rcv(&stats.row_norms_v_e)? / rcv_v_mid;
    let phi_o = rcv(&stats.row_norms_o_m)?;
    let denom = phi_k * phi_v;
    if !(denom > 0.0) {
        return Err(TraceError::Numeric(format!(
            "{}: early key/value dispersion is zero; I(M) is undefined",
            stats.model_id
        )));
    }
    let i_m = phi_n * phi_o / denom;
    Ok(InvariantReport {
        phi_n,
        phi_k,
        phi_v,
        phi_o,
        i_m,
        branch: branch_for(i_m, hp.tau_i),
    })
}

/// The cached invariant if present (checked against a recomputation),
/// otherwise a fresh computation.
pub fn resolve_invariant(stats: &ModelWeightStats, hp: &HyperParameters) -> Result<InvariantReport> {
    let fresh = compute_invariant(stats, hp)?;
    if let Some(cached) = stats.invariant {
        let rel = (cached.i_m - fresh.i_m).abs() / fresh.i_m.abs().max(f64::MIN_POSITIVE);
        if rel > 1e-9 || cached.branch != fresh.branch {
            return Err(TraceError::validation(
                &stats.model_id,
                "invariant",
                format!(
                    "cached I(M) = {} disagrees with recomputed {}",
                    cached.i_m, fresh.i_m
                ),
            ));
        }
    }
    Ok(fresh)
}
