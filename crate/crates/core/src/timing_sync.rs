//! Preamble-based timing synchronization.
//!
//! Each receive antenna correlates its samples with every preamble and picks
//! the strongest shift, giving one sum offset per link. The `NM` sum offsets
//! are then fitted by the `N + M` per-antenna offsets in least squares, with
//! the first receive antenna fixed at zero.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::sequences::SequenceSet;

/// Sum offsets `τ_rx[i] + τ_tx[j]`, row-major in `i`, in symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumOffsetMatrix {
    pub gamma: Vec<f64>,
    pub n_rx: usize,
    pub m_tx: usize,
    /// Grid step in symbols.
    pub resolution: f64,
}

/// Per-antenna offsets `[τ_rx; τ_tx]` in symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaOffsets {
    pub tau_rx: Vec<f64>,
    pub tau_tx: Vec<f64>,
}

impl AntennaOffsets {
    /// `Ī τ`: the sum offsets implied by these per-antenna offsets.
    pub fn sum_offsets(&self) -> Vec<f64> {
        self.tau_rx.iter().flat_map(|r| self.tau_tx.iter().map(move |t| r + t)).collect()
    }
}

/// `[I_N ⊗ 1_M | 1_N ⊗ I_M]`.
pub fn incidence_matrix(n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n * m, n + m, |row, col| {
        let (i, j) = (row / m, row % m);
        f64::from(if col < n { col == i } else { col - n == j })
    })
}

/// `|Σ_k a*(k) y(kQ + shift)|²`.
pub fn correlation_metric(rx: &[Complex64], preamble: &[Complex64], shift: usize, q: usize) -> Result<f64> {
    let last = shift + (preamble.len().saturating_sub(1)) * q;
    if preamble.is_empty() || last >= rx.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} samples cannot cover {} symbols at shift {shift}",
            rx.len(),
            preamble.len()
        )));
    }
    let acc: Complex64 = preamble.iter().enumerate().map(|(k, a)| a.conj() * rx[k * q + shift]).sum();
    Ok(acc.norm_sqr())
}

/// Largest shift searched, `⌈2Qτ_max⌉`.
pub fn max_shift(tau_max: f64, q: usize) -> usize {
    (2.0 * q as f64 * tau_max).ceil().max(0.0) as usize
}

/// Number of samples a receiver must capture for the sum-offset search.
pub fn required_samples(preamble_len: usize, tau_max: f64, q: usize) -> usize {
    (preamble_len - 1) * q + max_shift(tau_max, q) + 1
}

/// Peak-picks every link's sum offset. Ties go to the smallest shift.
pub fn estimate_sum_offsets(rx: &[Vec<Complex64>], set: &SequenceSet, tau_max: f64, q: usize) -> Result<SumOffsetMatrix> {
    if q == 0 {
        return Err(Error::InvalidParameter("oversampling must be positive".into()));
    }
    let shifts = max_shift(tau_max, q);
    let mut gamma = Vec::with_capacity(rx.len() * set.count());
    for (i, stream) in rx.iter().enumerate() {
        if stream.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
            return Err(Error::DegenerateInput(format!("receive stream {i} is identically zero")));
        }
        for seq in &set.sequences {
            let mut best = (0usize, f64::NEG_INFINITY);
            for s in 0..=shifts {
                let metric = correlation_metric(stream, seq, s, q)?;
                if metric > best.1 {
                    best = (s, metric);
                }
            }
            gamma.push(best.0 as f64 / q as f64);
        }
    }
    Ok(SumOffsetMatrix { gamma, n_rx: rx.len(), m_tx: set.count(), resolution: 1.0 / q as f64 })
}

/// Least-squares per-antenna offsets with `τ_rx[0] = 0`.
pub fn solve_per_antenna(gamma_hat: &SumOffsetMatrix) -> Result<AntennaOffsets> {
    let (n, m) = (gamma_hat.n_rx, gamma_hat.m_tx);
    if gamma_hat.gamma.len() != n * m || n == 0 || m == 0 {
        return Err(Error::DimensionMismatch("sum-offset vector does not match N x M".into()));
    }
    let full = incidence_matrix(n, m);
    // Dropping the reference column leaves a full-column-rank system.
    let reduced = full.remove_column(0);
    let g = DVector::from_column_slice(&gamma_hat.gamma);
    let normal = reduced.transpose() * &reduced;
    let rhs = reduced.transpose() * g;
    let sol = solve_spd(&normal, &rhs, "timing least squares")?;
    let mut tau_rx = vec![0.0];
    tau_rx.extend(sol.iter().take(n - 1));
    let tau_tx = sol.iter().skip(n - 1).copied().collect();
    Ok(AntennaOffsets { tau_rx, tau_tx })
}

/// `sqrt(‖γ̂ - γ‖² / N²)`.
pub fn sum_offset_rmse(estimate: &[f64], truth: &[f64], n_rx: usize) -> f64 {
    let sq: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    (sq / (n_rx * n_rx) as f64).sqrt()
}

/// Which pulse filter a correction is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterSide {
    Tx,
    Rx,
}

/// Per-antenna shifts applied to one site's pulse filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationPlan {
    pub side: FilterSide,
    /// Advance (in symbols) applied to each antenna's filter.
    pub advances: Vec<f64>,
}

impl CompensationPlan {
    /// Offsets remaining after compensating `true_offsets`.
    pub fn residual(&self, true_offsets: &[f64]) -> Vec<f64> {
        true_offsets.iter().zip(&self.advances).map(|(t, a)| t - a).collect()
    }
}

/// Shifts `g(t + τ̂)` for one site's own antennas, from that site's estimate only.
pub fn plan_compensation(local_estimate: &[f64], side: FilterSide) -> CompensationPlan {
    CompensationPlan { side, advances: local_estimate.to_vec() }
}
