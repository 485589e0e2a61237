// SPDX-License-Identifier: MIT OR Apache-2.0

//! Resampling interval and exact sign test over cell deltas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};

pub const DEFAULT_RESAMPLES: usize = 200_000;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_SEED: u64 = 20_250_917;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

/// Bootstrap means of `deltas`, sorted ascending.
pub fn bootstrap_means(deltas: &[f64], resamples: usize, seed: u64) -> Result<Vec<f64>> {
    if deltas.is_empty() {
        return Err(TraceError::Evaluation("bootstrap over empty deltas".into()));
    }
    if resamples == 0 {
        return Err(TraceError::Evaluation("bootstrap needs at least one resample".into()));
    }
    let n = deltas.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| deltas[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(means)
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval of the means at `level` coverage.
pub fn percentile_interval(sorted_means: &[f64], level: f64) -> Result<Interval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(TraceError::Evaluation(format!("level {level} outside (0, 1)")));
    }
    if sorted_means.is_empty() {
        return Err(TraceError::Evaluation("no bootstrap means".into()));
    }
    Ok(Interval {
        lo: quantile(sorted_means, (1.0 - level) / 2.0),
        hi: quantile(sorted_means, (1.0 + level) / 2.0),
    })
}

/// Percentile bootstrap interval for the mean of `deltas`.
pub fn bootstrap_ci(deltas: &[f64], resamples: usize, level: f64, seed: u64) -> Result<Interval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(TraceError::Evaluation(format!("level {level} outside (0, 1)")));
    }
    percentile_interval(&bootstrap_means(deltas, resamples, seed)?, level)
}

/// One-sided exact sign test: `P(X ≥ k)` for `X ~ Binomial(n, 1/2)`, where
/// `k` counts positive deltas.
pub fn sign_test(deltas: &[f64]) -> Result<f64> {
    if deltas.is_empty() {
        return Err(TraceError::Evaluation("sign test over empty deltas".into()));
    }
    if let Some(i) = deltas.iter().position(|&d| d == 0.0 || d.is_nan()) {
        return Err(TraceError::Evaluation(format!(
            "delta {i} is {}; zero or undefined deltas must be resolved before the sign test",
            deltas[i]
        )));
    }
    let positives = deltas.iter().filter(|&&d| d > 0.0).count();
    Ok(binomial_upper_tail(deltas.len(), positives))
}

/// `Σ_{j≥k} C(n, j) / 2ⁿ`, exact in integers for `n ≤ 120`.
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if n <= 120 {
        let mut c: u128 = 1;
        let mut total: u128 = 0;
        for j in 1..=n {
            c = c * (n + 1 - j) as u128 / j as u128;
            if j >= k {
                total += c;
            }
        }
        return total as f64 * 0.5f64.powi(n as i32);
    }
    let ln2 = std::f64::consts::LN_2;
    let mut ln_c = 0.0;
    let mut terms = Vec::with_capacity(n - k + 1);
    for j in 1..=n {
        ln_c += ((n + 1 - j) as f64).ln() - (j as f64).ln();
        if j >= k {
            terms.push(ln_c - n as f64 * ln2);
        }
    }
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()).exp()
}
