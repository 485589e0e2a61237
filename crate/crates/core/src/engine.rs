// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-item routing and batch execution.
//!
//! An item is first split on its effective trajectory dimension. Items
//! above `τ_dim` go to the candidate-space arm (gated decisive-layer
//! override); the rest go to the scalar arm, where the model invariant
//! picks signed mixing or earliest-state fallback. Every path that does
//! not intervene returns the base argmax.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::{AblationVariant, HyperParameters};
use crate::error::{Result, TraceError};
use crate::geometry::{center, d_eff, mid_window};
use crate::model::ArchiveItem;
use crate::operators::{
    argmax, decisive_layer_from_stats, early_fallback, md_gate_from_stats, scalar_lambda,
    scalar_mix, trajectory_stats,
};
use crate::scorer::calibrated_candidate_scores;

pub const VERDICT_SCHEMA_VERSION: u32 = 1;

/// Which return path produced the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    MdOverride,
    MdAbstain,
    ScalarTrust,
    ScalarReverse,
    ScalarAbstain,
    EarlyFallback,
    Base,
}

impl Regime {
    pub const ALL: [Regime; 7] = [
        Self::MdOverride,
        Self::MdAbstain,
        Self::ScalarTrust,
        Self::ScalarReverse,
        Self::ScalarAbstain,
        Self::EarlyFallback,
        Self::Base,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MdOverride => "md_override",
            Self::MdAbstain => "md_abstain",
            Self::ScalarTrust => "scalar_trust",
            Self::ScalarReverse => "scalar_reverse",
            Self::ScalarAbstain => "scalar_abstain",
            Self::EarlyFallback => "early_fallback",
            Self::Base => "base",
        }
    }

    pub fn is_candidate_space(self) -> bool {
        matches!(self, Self::MdOverride | Self::MdAbstain)
    }

    pub fn is_abstention(self) -> bool {
        matches!(self, Self::MdAbstain | Self::ScalarAbstain)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub d_eff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_star: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_flip: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_logr: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_h: Option<bool>,
    /// `null` on the wire stands for `-inf` (flat mid window).
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_neg_inf",
        deserialize_with = "de_neg_inf"
    )]
    pub g_logr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub i_m: f64,
}

fn ser_neg_inf<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        _ => s.serialize_none(),
    }
}

fn de_neg_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    Ok(Some(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY)))
}

/// Routed decision for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdict {
    pub schema_version: u32,
    pub item_id: String,
    pub chosen_index: usize,
    pub regime: Regime,
    /// The vector whose argmax is `chosen_index`.
    pub final_scores: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub hp: HyperParameters,
    /// Weights-only invariant of the model that produced the archive.
    pub i_m: f64,
    pub variant: AblationVariant,
}

impl EngineConfig {
    pub fn new(hp: HyperParameters, i_m: f64) -> Self {
        let variant = hp.ablation_variant;
        Self { hp, i_m, variant }
    }

    pub fn with_variant(mut self, variant: AblationVariant) -> Self {
        self.variant = variant;
        self.hp.ablation_variant = variant;
        self
    }
}

fn verdict(item_id: &str, regime: Regime, final_scores: Vec<f64>, diagnostics: Diagnostics) -> Verdict {
    Verdict {
        schema_version: VERDICT_SCHEMA_VERSION,
        item_id: item_id.to_owned(),
        chosen_index: argmax(&final_scores),
        regime,
        final_scores,
        diagnostics,
    }
}

/// Route one item.
pub fn run_item(item: &ArchiveItem, cfg: &EngineConfig) -> Result<Verdict> {
    use AblationVariant as V;

    let traj = &item.trajectory;
    let hp = &cfg.hp;
    traj.validate()?;

    let mid = mid_window(traj.depth, hp)?;
    let centered = center(traj, &mid);
    let dim = d_eff(&centered.x)?;
    let base = traj.base();
    let mut diag = Diagnostics {
        d_eff: dim,
        l_star: None,
        gate_flip: None,
        gate_logr: None,
        gate_h: None,
        g_logr: None,
        g_h: None,
        lambda: None,
        i_m: cfg.i_m,
    };
    let id = traj.item_id.as_str();

    let multi = dim > hp.tau_dim;
    let candidate_space_arm = match cfg.variant {
        V::ForceMd => true,
        V::ForceScalar => false,
        _ => multi,
    };
    if candidate_space_arm {
        if cfg.variant == V::DropMd {
            return Ok(verdict(id, Regime::Base, base, diag));
        }
        let stats = trajectory_stats(traj)?;
        let decisive = decisive_layer_from_stats(&stats, hp.eps_h);
        let gate = md_gate_from_stats(&stats, &base, &decisive.q, &mid, hp);
        diag.l_star = Some(decisive.layer);
        diag.gate_flip = Some(gate.flip);
        diag.gate_logr = Some(gate.g_logr > hp.tau_logr);
        diag.gate_h = Some(gate.g_h > hp.tau_h);
        diag.g_logr = Some(gate.g_logr);
        diag.g_h = Some(gate.g_h);
        return Ok(if gate.kappa {
            verdict(id, Regime::MdOverride, decisive.q, diag)
        } else {
            verdict(id, Regime::MdAbstain, base, diag)
        });
    }

    let mix_branch = match cfg.variant {
        V::ForceMixAllModels => true,
        V::ForceEarlyAllModels => false,
        _ => cfg.i_m > hp.tau_i,
    };
    if mix_branch {
        if matches!(cfg.variant, V::DropMix | V::DropBothScalar) {
            return Ok(verdict(id, Regime::Base, base, diag));
        }
        if !item.has_logits() {
            return Err(TraceError::Input {
                item_id: id.to_owned(),
                message: "scalar mixing requires position_depth_logits, none stored".into(),
            });
        }
        let scores = calibrated_candidate_scores(item, &hp.scorer)?;
        let lambda = scalar_lambda(&base, &scores.t, hp.eta);
        diag.lambda = Some(lambda);
        return Ok(if lambda > 0.0 {
            verdict(id, Regime::ScalarTrust, scalar_mix(&base, &scores.t, lambda), diag)
        } else if lambda < 0.0 {
            verdict(id, Regime::ScalarReverse, scalar_mix(&base, &scores.t, lambda), diag)
        } else {
            verdict(id, Regime::ScalarAbstain, base, diag)
        });
    }

    if matches!(cfg.variant, V::DropEarly | V::DropBothScalar) {
        return Ok(verdict(id, Regime::Base, base, diag));
    }
    let (scores, fired) = early_fallback(&base, &traj.layer(0), hp.gamma_conf);
    Ok(if fired {
        verdict(id, Regime::EarlyFallback, scores, diag)
    } else {
        verdict(id, Regime::Base, scores, diag)
    })
}

/// Route a batch. Output order follows input order for any `parallelism`;
/// on failure the error of the earliest failing item is returned.
pub fn run_batch(items: &[ArchiveItem], cfg: &EngineConfig, parallelism: usize) -> Result<Vec<Verdict>> {
    let results: Vec<Result<Verdict>> = if parallelism <= 1 {
        items.iter().map(|it| run_item(it, cfg)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| TraceError::Config(format!("thread pool: {e}")))?;
        pool.install(|| items.par_iter().map(|it| run_item(it, cfg)).collect())
    };
    results.into_iter().collect()
}
