// SPDX-License-Identifier: MIT OR Apache-2.0

//! Frozen hyperparameter set and ablation switches.
//!
//! The JSON form mirrors the struct field names one-to-one and rejects
//! unknown keys. [`HyperParameters::default`] is the published setting.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, TraceError};

/// Products `f * L` within this distance of an integer are snapped to it
/// before flooring or ceiling, so `0.2 * 25` is 5 and not 4.
const SNAP_TOL: f64 = 1e-9;

pub(crate) fn snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < SNAP_TOL {
        r
    } else {
        x
    }
}

/// `⌊f·L⌋` with integer snapping.
pub fn floor_fraction(f: f64, depth: usize) -> usize {
    snapped(f * depth as f64).floor().max(0.0) as usize
}

/// `⌈f·L⌉` with integer snapping.
pub fn ceil_fraction(f: f64, depth: usize) -> usize {
    snapped(f * depth as f64).ceil().max(0.0) as usize
}

/// Upper edge of the mid window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoPlus {
    /// `ρ₊ = 1 − 1/L`, so `⌊ρ₊L⌋ = L − 1` exactly.
    OneMinusInverseDepth,
    Fixed(f64),
}

impl RhoPlus {
    const RULE: &'static str = "1-1/L";

    /// `⌊ρ₊·L⌋` for a model of depth `depth`.
    pub fn upper_index(self, depth: usize) -> usize {
        match self {
            Self::OneMinusInverseDepth => depth.saturating_sub(1),
            Self::Fixed(f) => floor_fraction(f, depth),
        }
    }
}

impl Serialize for RhoPlus {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::OneMinusInverseDepth => s.serialize_str(Self::RULE),
            Self::Fixed(f) => s.serialize_f64(*f),
        }
    }
}

impl<'de> Deserialize<'de> for RhoPlus {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Rule(String),
            Fixed(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Fixed(f) => Ok(Self::Fixed(f)),
            Raw::Rule(r) if r.replace(' ', "") == Self::RULE => Ok(Self::OneMinusInverseDepth),
            Raw::Rule(r) => Err(serde::de::Error::custom(format!(
                "unknown rho_plus rule `{r}` (expected \"{}\" or a number)",
                Self::RULE
            ))),
        }
    }
}

/// One of the nine routing variants of the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    #[default]
    None,
    ForceMd,
    ForceScalar,
    DropMix,
    DropEarly,
    DropBothScalar,
    DropMd,
    ForceMixAllModels,
    ForceEarlyAllModels,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 9] = [
        Self::None,
        Self::ForceMd,
        Self::ForceScalar,
        Self::DropMix,
        Self::DropEarly,
        Self::DropBothScalar,
        Self::DropMd,
        Self::ForceMixAllModels,
        Self::ForceEarlyAllModels,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ForceMd => "force_md",
            Self::ForceScalar => "force_scalar",
            Self::DropMix => "drop_mix",
            Self::DropEarly => "drop_early",
            Self::DropBothScalar => "drop_both_scalar",
            Self::DropMd => "drop_md",
            Self::ForceMixAllModels => "force_mix_all_models",
            Self::ForceEarlyAllModels => "force_early_all_models",
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationVariant {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| TraceError::Config(format!("unknown ablation variant `{s}`")))
    }
}

/// `k = max{min, ⌈vocab_fraction·|V|⌉}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopKRule {
    pub min: usize,
    pub vocab_fraction: f64,
}

impl TopKRule {
    pub fn cutoff(&self, vocab_size: usize) -> usize {
        self.min.max(ceil_fraction(self.vocab_fraction, vocab_size))
    }
}

/// Weights of the positive-part slope, jump and curvature features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureWeights {
    pub slope: f64,
    pub jump: f64,
    pub curv: f64,
}

/// Constants of the trajectory scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerParams {
    /// Relative anchor depths.
    pub anchor_fractions: Vec<f64>,
    /// Relative feature depths.
    pub feature_fractions: Vec<f64>,
    pub topk_rule: TopKRule,
    /// Recurrence quorum over anchors.
    pub r_omega: usize,
    pub feature_weights: FeatureWeights,
    /// Mixing floor on the final-layer logit.
    pub lambda0: f64,
    /// Sigmoid slope of the adaptive mixing weight.
    pub gamma_sig: f64,
}

impl Default for ScorerParams {
    fn default() -> Self {
        Self {
            anchor_fractions: vec![0.2692, 0.5769, 0.8461, 1.0],
            feature_fractions: vec![0.50, 0.6923, 0.8461, 1.0],
            topk_rule: TopKRule {
                min: 50,
                vocab_fraction: 0.005,
            },
            r_omega: 3,
            feature_weights: FeatureWeights {
                slope: 0.3,
                jump: 0.5,
                curv: 0.2,
            },
            lambda0: 0.5,
            gamma_sig: 5.0,
        }
    }
}

/// The full hyperparameter set, frozen across models and benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParameters {
    pub rho_minus: f64,
    pub rho_plus: RhoPlus,
    /// Early structural depth fraction for the weights-only invariant.
    pub rho_e: f64,
    /// Mid structural depth fraction for the weights-only invariant.
    pub rho_m: f64,
    pub tau_dim: f64,
    pub tau_i: f64,
    pub tau_logr: f64,
    pub tau_h: f64,
    pub eps_h: f64,
    pub delta_r: f64,
    pub eta: f64,
    /// Confidence floor of the earliest-state fallback.
    pub gamma_conf: f64,
    pub scorer: ScorerParams,
    #[serde(default)]
    pub ablation_variant: AblationVariant,
}

impl Default for HyperParameters {
    fn default() -> Self {
        Self {
            rho_minus: 0.50,
            rho_plus: RhoPlus::OneMinusInverseDepth,
            rho_e: 0.20,
            rho_m: 0.50,
            tau_dim: 1.0015,
            tau_i: 1.0,
            tau_logr: 1.0,
            tau_h: 0.7,
            eps_h: 0.10,
            delta_r: 1e-12,
            eta: 1.0,
            gamma_conf: -1.0,
            scorer: ScorerParams::default(),
            ablation_variant: AblationVariant::None,
        }
    }
}

impl HyperParameters {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(TraceError::Config(msg.to_owned()));
        if !(self.rho_minus > 0.0 && self.rho_minus < 1.0) {
            return fail("rho_minus must lie in (0, 1)");
        }
        if let RhoPlus::Fixed(f) = self.rho_plus {
            if !(f > self.rho_minus && f <= 1.0) {
                return fail("rho_plus must lie in (rho_minus, 1]");
            }
        }
        if !(0.0 < self.rho_e && self.rho_e < self.rho_m && self.rho_m < 1.0) {
            return fail("require 0 < rho_e < rho_m < 1");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return fail("eta must lie in (0, 1]");
        }
        if !(self.tau_dim >= 1.0) {
            return fail("tau_dim must be >= 1");
        }
        if !(self.eps_h > 0.0) || !(self.delta_r > 0.0) {
            return fail("eps_h and delta_r must be positive");
        }
        let s = &self.scorer;
        if !(s.lambda0 >= 0.0 && s.lambda0 < 1.0) {
            return fail("scorer.lambda0 must lie in [0, 1)");
        }
        let in_unit = |v: &[f64]| !v.is_empty() && v.iter().all(|&f| f > 0.0 && f <= 1.0);
        if !in_unit(&s.anchor_fractions) || !in_unit(&s.feature_fractions) {
            return fail("scorer depth fractions must be non-empty and lie in (0, 1]");
        }
        if s.r_omega == 0 || s.r_omega > s.anchor_fractions.len() {
            return fail("scorer.r_omega must lie in 1..=|anchor_fractions|");
        }
        if s.feature_fractions.len() < 3 {
            return fail("scorer needs at least 3 feature depths");
        }
        if !(s.gamma_sig > 0.0) {
            return fail("scorer.gamma_sig must be positive");
        }
        Ok(())
    }

    /// Parse a configuration document; unknown keys are rejected.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let hp: Self = serde_json::from_str(text)
            .map_err(|e| TraceError::Config(format!("invalid configuration: {e}")))?;
        hp.validate()?;
        Ok(hp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TraceError::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("hyperparameters always serialize")
    }

    pub fn with_variant(mut self, variant: AblationVariant) -> Self {
        self.ablation_variant = variant;
        self
    }
}
