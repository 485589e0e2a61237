// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent oracles and seeded generators shared by the integration
//! and acceptance tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trace_core::geometry::Matrix;
use trace_core::model::{ArchiveItem, CandidateTrajectory, DepthRecord, PositionDepthLogits};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- spectra

fn to_nalgebra(x: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.rows, x.cols, &x.data)
}

/// `(Σσ²)² / Σσ⁴` from an SVD.
pub fn oracle_d_eff_svd(x: &Matrix) -> f64 {
    let sv = to_nalgebra(x).singular_values();
    let s2: f64 = sv.iter().map(|s| s * s).sum();
    let s4: f64 = sv.iter().map(|s| s.powi(4)).sum();
    assert!(s2 > 0.0, "oracle undefined on the zero matrix");
    s2 * s2 / s4
}

pub fn oracle_rank(x: &Matrix) -> usize {
    let sv = to_nalgebra(x).singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > top * 1e-10).count()
}

/// Column-centered matrix of exact rank `rank`, built as a sum of `rank`
/// outer products whose left factors lie in the complement of the ones
/// vector.
#[derive(Debug, Clone, Copy)]
pub struct RankControlledGenerator {
    pub n: usize,
    pub columns: usize,
    pub rank: usize,
    pub seed: u64,
}

impl RankControlledGenerator {
    /// Draw `n ∈ [2, 13]`, `columns ∈ [2, 80]`, `rank ∈ [1, min(n − 1, columns)]`.
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(2..=13);
        let columns = rng.random_range(2..=80);
        let rank = rng.random_range(1..=(n - 1).min(columns));
        Self { n, columns, rank, seed: rng.random() }
    }

    pub fn generate(&self) -> Matrix {
        let mut rng = rng(self.seed);
        let mut data = vec![0.0; self.n * self.columns];
        for _ in 0..self.rank {
            // Per-direction scale spread over two decades varies the spectrum.
            let scale = 10f64.powf(rng.random_range(-1.0..1.0));
            let mut u: Vec<f64> = (0..self.n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = u.iter().sum::<f64>() / self.n as f64;
            u.iter_mut().for_each(|x| *x -= mean);
            let v: Vec<f64> = (0..self.columns).map(|_| rng.random_range(-1.0..1.0)).collect();
            for i in 0..self.n {
                for j in 0..self.columns {
                    data[i * self.columns + j] += scale * u[i] * v[j];
                }
            }
        }
        // Remove the residual column mean left by rounding.
        for j in 0..self.columns {
            let mean = (0..self.n).map(|i| data[i * self.columns + j]).sum::<f64>() / self.n as f64;
            for i in 0..self.n {
                data[i * self.columns + j] -= mean;
            }
        }
        Matrix::new(self.n, self.columns, data)
    }
}

// ---------------------------------------------------------------- scalar sweep

/// `lo, lo + step, …, hi` computed from integer steps.
pub fn lambda_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step).round() as i64;
    (0..=count).map(|k| lo + k as f64 * step).collect()
}

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Every argmax reachable by `(1 − λ)b + λt` over `grid`.
pub fn oracle_scalar_sweep(b: &[f64], t: &[f64], grid: &[f64]) -> BTreeSet<usize> {
    grid.iter()
        .map(|&l| {
            let u: Vec<f64> = b.iter().zip(t).map(|(x, y)| (1.0 - l) * x + l * y).collect();
            first_max(&u)
        })
        .collect()
}

// ---------------------------------------------------------------- statistics

/// Binomial upper tail by Pascal's triangle in f64 (exact for `n ≤ 55`).
pub fn oracle_binomial_tail(n: usize, k: usize) -> f64 {
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![1.0; row.len() + 1];
        for j in 1..row.len() {
            next[j] = row[j - 1] + row[j];
        }
        row = next;
    }
    row[k..].iter().sum::<f64>() / 2f64.powi(n as i32)
}

pub fn oracle_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// ---------------------------------------------------------------- trajectories

/// Item from per-depth score columns (`cols[ℓ][i]`).
pub fn item_from_columns(id: &str, cols: &[Vec<f64>], truthful: usize) -> ArchiveItem {
    let n = cols[0].len();
    let width = cols.len();
    let mut scores = vec![0.0; n * width];
    for (l, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            scores[i * width + l] = *v;
        }
    }
    ArchiveItem::new(CandidateTrajectory {
        item_id: id.into(),
        benchmark_id: "synthetic".into(),
        n,
        depth: width - 1,
        scores,
        candidate_texts: (0..n).map(|i| format!("candidate {i}")).collect(),
        candidate_token_counts: vec![1; n],
        truthful_indices: Some(vec![truthful]),
    })
}

fn shift(v: &[f64], by: f64) -> Vec<f64> {
    v.iter().map(|x| x + by).collect()
}

/// Three candidates, `L = 8`: the base column ranks them (1, 2, 3) with
/// scores proportional to (3, 2, 1), and mid layer 5 carries the
/// log-odds (1, 1, 5), which favors the third candidate.
pub fn md_override_item() -> ArchiveItem {
    let b = [3.0, 2.0, 1.0].map(|x| 0.1 * x - 0.5);
    let cols = vec![
        vec![-1.10, -1.00, -1.20],
        vec![-1.00, -1.15, -1.10],
        vec![-1.20, -1.05, -1.10],
        vec![-1.05, -1.10, -1.00],
        vec![-1.00, -1.20, -1.10],
        shift(&[1.0, 1.0, 5.0], -6.0),
        vec![-1.10, -1.00, -1.30],
        vec![-0.90, -1.00, -1.05],
        b.to_vec(),
    ];
    item_from_columns("md_override", &cols, 2)
}

/// Full-vocabulary logits, stored top-k, for one position at one depth.
pub fn depth_record(depth: usize, logits: &[f64], own: u32, k: usize) -> DepthRecord {
    let mut order: Vec<u32> = (0..logits.len() as u32).collect();
    order.sort_by(|&a, &b| logits[b as usize].total_cmp(&logits[a as usize]).then(a.cmp(&b)));
    order.truncate(k);
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + logits.iter().map(|z| (z - top).exp()).sum::<f64>().ln();
    DepthRecord {
        depth,
        topk_logits: order.iter().map(|&t| logits[t as usize]).collect(),
        topk_ids: order,
        logsumexp_full: lse,
        own_logit: logits[own as usize].min(lse),
    }
}

/// Parameters of the random corpus generator.
#[derive(Debug, Clone, Copy)]
pub struct CorpusShape {
    pub depth: usize,
    pub vocab: usize,
    pub topk: usize,
    pub max_candidates: usize,
    pub max_tokens: usize,
}

impl Default for CorpusShape {
    fn default() -> Self {
        Self { depth: 8, vocab: 12, topk: 6, max_candidates: 5, max_tokens: 3 }
    }
}

/// Random item whose `S` is recomputed from stored logits at every depth.
pub fn random_item(rng: &mut ChaCha8Rng, id: &str, benchmark: &str, shape: CorpusShape) -> ArchiveItem {
    let n = rng.random_range(2..=shape.max_candidates);
    let l = shape.depth;
    let counts: Vec<usize> = (0..n).map(|_| rng.random_range(1..=shape.max_tokens)).collect();
    let mut sums = vec![vec![0.0; l + 1]; n];
    let mut logits = Vec::new();
    for (c, &m) in counts.iter().enumerate() {
        for pos in 1..=m {
            let own = rng.random_range(0..shape.vocab as u32);
            let mut z: Vec<f64> = (0..shape.vocab).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut depths = Vec::with_capacity(l + 1);
            for d in 0..=l {
                for v in z.iter_mut() {
                    *v += rng.random_range(-0.6..0.6);
                }
                z[own as usize] += rng.random_range(-0.1..0.3);
                let rec = depth_record(d, &z, own, shape.topk);
                sums[c][d] += rec.own_logit - rec.logsumexp_full;
                depths.push(rec);
            }
            logits.push(PositionDepthLogits { candidate_index: c, position: pos, own_token_id: own, depths });
        }
    }
    let mut scores = Vec::with_capacity(n * (l + 1));
    for c in 0..n {
        scores.extend(sums[c].iter().map(|s| (s / counts[c] as f64).min(0.0)));
    }
    ArchiveItem {
        trajectory: CandidateTrajectory {
            item_id: id.into(),
            benchmark_id: benchmark.into(),
            n,
            depth: l,
            scores,
            candidate_texts: (0..n).map(|i| format!("{id}-c{i}")).collect(),
            candidate_token_counts: counts,
            truthful_indices: Some(vec![rng.random_range(0..n)]),
        },
        logits,
    }
}

pub fn random_corpus(seed: u64, count: usize, shape: CorpusShape) -> Vec<ArchiveItem> {
    let mut rng = rng(seed);
    let benches = ["truthfulqa", "halueval_qa", "halueval_sum"];
    (0..count)
        .map(|k| random_item(&mut rng, &format!("item-{k:05}"), benches[k % 3], shape))
        .collect()
}

// ---------------------------------------------------------------- abstention corpus

/// Multi-directional item whose every depth ranks the same candidate
/// first, so the override never flips.
pub fn agreeing_md_item(rng: &mut ChaCha8Rng, id: &str) -> ArchiveItem {
    loop {
        let n = rng.random_range(3..=6);
        let l = rng.random_range(6..=16);
        let winner = rng.random_range(0..n);
        let cols: Vec<Vec<f64>> = (0..=l)
            .map(|_| {
                let mut col: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..-1.5)).collect();
                col[winner] = rng.random_range(-1.2..-0.1);
                col
            })
            .collect();
        let item = item_from_columns(id, &cols, winner);
        let hp = trace_core::HyperParameters::default();
        let mid = trace_core::geometry::mid_window(l, &hp).unwrap();
        let x = trace_core::geometry::center(&item.trajectory, &mid);
        if trace_core::geometry::d_eff(&x.x).unwrap() > hp.tau_dim {
            return item;
        }
    }
}

/// Two-candidate item on the mixing path whose calibrated scores are
/// provably flatter than the base scores.
///
/// Both candidates share one context per position and all vocabulary
/// tokens are stored, so the mixed set and the calibrated normalizer are
/// shared. The two own tokens have a common logit `c` at every
/// non-final anchor, with `c` between their final logits. Each calibrated
/// logit then moves toward `c` by a factor of at most `1 − λ₀(1 − w_L)`,
/// which shrinks the gap below the base gap.
pub fn flattening_scalar_item(rng: &mut ChaCha8Rng, id: &str) -> ArchiveItem {
    let l = 8;
    let vocab = 5usize;
    let (tok_a, tok_b) = (0u32, 1u32);
    let anchors = [3usize, 5, 7];
    let m = rng.random_range(1..=3);
    let mut sums = [vec![0.0; l + 1], vec![0.0; l + 1]];
    let mut logits = Vec::new();
    for pos in 1..=m {
        let z_final_a = rng.random_range(0.0..2.0);
        let z_final_b = z_final_a - rng.random_range(1.0..5.0);
        let c = rng.random_range(z_final_b..z_final_a);
        let mut per_depth = Vec::with_capacity(l + 1);
        for d in 0..=l {
            let mut z: Vec<f64> = (0..vocab).map(|_| rng.random_range(-3.0..1.0)).collect();
            if d == l {
                z[tok_a as usize] = z_final_a;
                z[tok_b as usize] = z_final_b;
            } else if anchors.contains(&d) {
                z[tok_a as usize] = c;
                z[tok_b as usize] = c;
            }
            per_depth.push(z);
        }
        for (cand, own) in [(0usize, tok_a), (1, tok_b)] {
            let depths: Vec<DepthRecord> =
                per_depth.iter().enumerate().map(|(d, z)| depth_record(d, z, own, vocab)).collect();
            for (d, rec) in depths.iter().enumerate() {
                sums[cand][d] += rec.own_logit - rec.logsumexp_full;
            }
            logits.push(PositionDepthLogits { candidate_index: cand, position: pos, own_token_id: own, depths });
        }
    }
    let scores: Vec<f64> = sums.iter().flat_map(|row| row.iter().map(|s| (s / m as f64).min(0.0))).collect();
    ArchiveItem {
        trajectory: CandidateTrajectory {
            item_id: id.into(),
            benchmark_id: "synthetic".into(),
            n: 2,
            depth: l,
            scores,
            candidate_texts: vec!["a".into(), "b".into()],
            candidate_token_counts: vec![m, m],
            truthful_indices: Some(vec![0]),
        },
        logits,
    }
}

/// Alternating abstention corpus.
pub fn abstention_corpus(seed: u64, count: usize) -> Vec<ArchiveItem> {
    let mut rng = rng(seed);
    (0..count)
        .map(|k| {
            let id = format!("abstain-{k:04}");
            if k % 2 == 0 {
                agreeing_md_item(&mut rng, &id)
            } else {
                flattening_scalar_item(&mut rng, &id)
            }
        })
        .collect()
}
