// SPDX-License-Identifier: MIT OR Apache-2.0

//! Centered mid-window trajectory and its effective dimension.
//!
//! `d_eff` is the participation ratio of the candidate-space Gram spectrum,
//! evaluated through `tr C = ‖X‖_F²` and `tr C² = ‖XXᵀ‖_F²` so the
//! production path never calls an eigensolver.

use crate::config::{floor_fraction, HyperParameters};
use crate::error::{Result, TraceError};
use crate::model::CandidateTrajectory;

/// Below this value of `‖X‖_F²` the trajectory is treated as motionless.
pub const ZERO_FROBENIUS_SQ: f64 = 1e-24;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c)).sum())
            .collect()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self::new(self.rows, self.cols, self.data.iter().map(|x| alpha * x).collect())
    }
}

/// The mean-centered trajectory restricted to the mid window.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredTrajectory {
    /// `n × |mid_layers|`.
    pub x: Matrix,
    pub mid_layers: Vec<usize>,
}

/// Layers `⌊ρ₋L⌋ ≤ ℓ < ⌊ρ₊L⌋`. With the default fractions this is
/// `⌊L/2⌋..=L−2`.
pub fn mid_window(depth: usize, hp: &HyperParameters) -> Result<Vec<usize>> {
    let lo = floor_fraction(hp.rho_minus, depth);
    let hi = hp.rho_plus.upper_index(depth).min(depth);
    if lo >= hi {
        return Err(TraceError::Config(format!(
            "empty mid window for L = {depth}: floor(rho_minus*L) = {lo} >= floor(rho_plus*L) = {hi}"
        )));
    }
    Ok((lo..hi).collect())
}

/// Subtract the per-layer candidate mean from each mid-window column.
pub fn center(traj: &CandidateTrajectory, mid: &[usize]) -> CenteredTrajectory {
    let n = traj.n;
    let mut x = Matrix::zeros(n, mid.len());
    for (j, &layer) in mid.iter().enumerate() {
        let col = traj.layer(layer);
        let mean = col.iter().sum::<f64>() / n as f64;
        for (i, v) in col.into_iter().enumerate() {
            x.data[i * mid.len() + j] = v - mean;
        }
    }
    CenteredTrajectory {
        x,
        mid_layers: mid.to_vec(),
    }
}

/// Participation ratio `(tr C)² / tr(C²)` with `C = XXᵀ`.
///
/// Returns exactly 1 when `‖X‖_F² < 1e-24`.
pub fn d_eff(x: &Matrix) -> Result<f64> {
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(TraceError::Numeric(
            "non-finite entry in centered trajectory".into(),
        ));
    }
    let trace: f64 = x.data.iter().map(|v| v * v).sum();
    if trace < ZERO_FROBENIUS_SQ {
        return Ok(1.0);
    }
    let mut trace_sq = 0.0;
    for i in 0..x.rows {
        let ri = x.row(i);
        for j in 0..x.rows {
            let cij: f64 = ri.iter().zip(x.row(j)).map(|(a, b)| a * b).sum();
            trace_sq += cij * cij;
        }
    }
    Ok(trace * trace / trace_sq)
}

/// Singular values of `x` in descending order (one-sided Jacobi on the rows).
pub fn singular_values(x: &Matrix) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = (0..x.rows).map(|r| x.row(r).to_vec()).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..rows.len() {
            for q in (p + 1)..rows.len() {
                let alpha = dot(&rows[p], &rows[p]);
                let beta = dot(&rows[q], &rows[q]);
                let gamma = dot(&rows[p], &rows[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (head, tail) = rows.split_at_mut(q);
                for (a, b) in head[p].iter_mut().zip(tail[0].iter_mut()) {
                    let (ap, aq) = (*a, *b);
                    *a = c * ap - s * aq;
                    *b = s * ap + c * aq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = rows.iter().map(|r| dot(r, r).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Count of singular values above `tol · σ_max`; 0 for the zero matrix.
pub fn numerical_rank(x: &Matrix, tol: f64) -> usize {
    let sv = singular_values(x);
    match sv.first() {
        Some(&smax) if smax > 0.0 => sv.iter().filter(|&&s| s > tol * smax).count(),
        _ => 0,
    }
}
