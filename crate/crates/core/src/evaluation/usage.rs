// SPDX-License-Identifier: MIT OR Apache-2.0

//! Regime usage over a verdict stream.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Regime, Verdict};
use crate::error::{Result, TraceError};

/// Percentages over one stream. `pct_scalar` counts items with
/// `d_eff ≤ τ_dim`; the other three count items whose operator fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    pub items: usize,
    pub pct_scalar: f64,
    pub pct_md_fire: f64,
    pub pct_mix: f64,
    pub pct_early: f64,
    pub regimes: BTreeMap<Regime, usize>,
}

/// Compute usage, rejecting streams that use both scalar operators.
pub fn usage_stats<'a, I>(verdicts: I, tau_dim: f64) -> Result<UsageStats>
where
    I: IntoIterator<Item = &'a Verdict>,
{
    let mut items = 0usize;
    let mut scalar = 0usize;
    let mut regimes: BTreeMap<Regime, usize> = BTreeMap::new();
    for v in verdicts {
        items += 1;
        if v.diagnostics.d_eff <= tau_dim {
            scalar += 1;
        }
        *regimes.entry(v.regime).or_default() += 1;
    }
    if items == 0 {
        return Err(TraceError::Evaluation("usage statistics over an empty stream".into()));
    }
    let count = |r: Regime| regimes.get(&r).copied().unwrap_or(0);
    let mix = count(Regime::ScalarTrust) + count(Regime::ScalarReverse);
    let early = count(Regime::EarlyFallback);
    if mix > 0 && early > 0 {
        return Err(TraceError::Evaluation(format!(
            "branch conflict: {mix} mixing and {early} early-fallback verdicts in one stream"
        )));
    }
    let pct = |c: usize| 100.0 * c as f64 / items as f64;
    Ok(UsageStats {
        items,
        pct_scalar: pct(scalar),
        pct_md_fire: pct(count(Regime::MdOverride)),
        pct_mix: pct(mix),
        pct_early: pct(early),
        regimes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub pooled: UsageStats,
    pub per_benchmark: BTreeMap<String, UsageStats>,
}

/// Pooled and per-benchmark usage; `benchmarks[i]` labels `verdicts[i]`.
pub fn usage_report(benchmarks: &[&str], verdicts: &[Verdict], tau_dim: f64) -> Result<UsageReport> {
    if benchmarks.len() != verdicts.len() {
        return Err(TraceError::Evaluation(format!(
            "{} benchmark labels for {} verdicts",
            benchmarks.len(),
            verdicts.len()
        )));
    }
    let mut groups: BTreeMap<&str, Vec<&Verdict>> = BTreeMap::new();
    for (b, v) in benchmarks.iter().zip(verdicts) {
        groups.entry(b).or_default().push(v);
    }
    let per_benchmark = groups
        .into_iter()
        .map(|(b, vs)| Ok((b.to_owned(), usage_stats(vs, tau_dim)?)))
        .collect::<Result<_>>()?;
    Ok(UsageReport { pooled: usage_stats(verdicts, tau_dim)?, per_benchmark })
}
