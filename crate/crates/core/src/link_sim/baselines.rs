//! Transceivers and phase-noise handling of the reference methods.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelTaps;
use crate::error::{Error, Result};
use crate::linalg::{cis, hermitian_part, solve_hpd, CMat, ONE};
use crate::precoding::{update_decorrelator, StackedTapChannel, TransceiverDesign};
use crate::timing_sync::incidence_matrix;

/// Link-level method compared in the end-to-end experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Optimized precoder and memory decorrelator with decentralized pilot and decision-feedback tracking.
    Proposed,
    /// Single-tap MMSE equalizer and per-stream MMSE-FIR with centralized de-rotation at both ends.
    Baseline1,
    /// Memoryless MMSE decorrelator rebuilt from the phase-rotated channel at every pilot.
    Baseline2,
    /// SVD transceiver with the proposed phase tracking.
    Baseline3,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::Baseline1, Method::Baseline2, Method::Baseline3];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline1 => "baseline1",
            Method::Baseline2 => "baseline2",
            Method::Baseline3 => "baseline3",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Whether the method uses the per-antenna linearized tracker.
    pub fn tracks_per_antenna(self) -> bool {
        matches!(self, Method::Proposed | Method::Baseline3)
    }
}

/// Single-tap LS estimate `Y Uᴴ (U Uᴴ)⁻¹` (`rx` is `N x L`, `pilots` is `M x L`).
pub fn single_tap_estimate(rx: &CMat, pilots: &CMat) -> Result<CMat> {
    if rx.ncols() != pilots.ncols() {
        return Err(Error::DimensionMismatch("pilot and received lengths differ".into()));
    }
    let gram = hermitian_part(&(pilots * pilots.adjoint()));
    let rhs = pilots * rx.adjoint();
    Ok(solve_hpd(&gram, &rhs, "single-tap pilot Gram matrix")?.adjoint())
}

fn wrap(phase: f64) -> f64 {
    (phase + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
}

/// Sum-phase extraction `∠vec(Ĥ_q) - ∠vec(Ĥ_ref)` (row-major in the receive
/// index), unwrapped toward `previous`.
pub fn extract_sum_phases(current: &CMat, reference: &CMat, previous: &[f64]) -> Vec<f64> {
    let (n, m) = current.shape();
    (0..n * m)
        .map(|r| {
            let (i, j) = (r / m, r % m);
            let raw = (current[(i, j)] * reference[(i, j)].conj()).arg();
            let prev = previous.get(r).copied().unwrap_or(0.0);
            prev + wrap(raw - prev)
        })
        .collect()
}

/// Minimum-norm per-antenna phases `[rx; tx]` from sum phases via the incidence pseudo-inverse.
pub struct SumPhaseSolver {
    pinv: DMatrix<f64>,
}

impl SumPhaseSolver {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        let pinv = incidence_matrix(n, m)
            .pseudo_inverse(1e-10)
            .map_err(|e| Error::NumericalDegeneracy(e.to_string()))?;
        Ok(Self { pinv })
    }

    pub fn solve(&self, sum_phases: &[f64]) -> Vec<f64> {
        (&self.pinv * nalgebra::DVector::from_column_slice(sum_phases)).iter().copied().collect()
    }
}

/// Applies per-link phases `vartheta` (row-major) to every tap.
pub fn rotate_links(taps: &ChannelTaps, vartheta: &[f64]) -> ChannelTaps {
    let m = taps.m_tx();
    let rotated = taps
        .taps
        .iter()
        .map(|t| CMat::from_fn(t.nrows(), t.ncols(), |i, j| t[(i, j)] * cis(vartheta[i * m + j])))
        .collect();
    ChannelTaps { taps: rotated, window: taps.window, reference_symbol: taps.reference_symbol }
}

fn identity_precoder(m: usize, power: f64) -> CMat {
    CMat::identity(m, m).scale((power / m as f64).sqrt())
}

/// Memoryless MMSE decorrelator with an equal-power identity precoder.
///
/// `stacked` must be built with zero memory.
pub fn memoryless_mmse(stacked: &StackedTapChannel, power: f64, sigma2: f64, cap_bits: f64) -> Result<TransceiverDesign> {
    if stacked.memory != 0 {
        return Err(Error::InvalidParameter("memoryless design needs a zero-memory stacked channel".into()));
    }
    let f = identity_precoder(stacked.m_tx(), power);
    let w = update_decorrelator(&f, stacked, sigma2)?;
    Ok(TransceiverDesign { precoder: f, decorrelator: w, gamma: vec![1.0; stacked.m_tx()], memory: 0, power, cap_bits, objective_history: Vec::new() })
}

/// Single-tap MMSE equalizer followed by a per-stream Wiener FIR of `2D+1` taps.
///
/// The equalizer `G` comes from `single_tap`; each stream's FIR acts on the
/// equalized stream `G[m,:] y(k-d)` and is fitted to the multi-tap channel in `stacked`.
pub fn mmse_fir(single_tap: &CMat, stacked: &StackedTapChannel, power: f64, sigma2: f64, cap_bits: f64) -> Result<TransceiverDesign> {
    let (n, m) = single_tap.shape();
    let memory = stacked.memory;
    let taps = 2 * memory + 1;
    let f = identity_precoder(m, power);
    let p = power / m as f64;
    let mut cov = single_tap.adjoint() * single_tap * Complex64::from(p);
    for i in 0..m {
        cov[(i, i)] += ONE * sigma2;
    }
    // G = (p HᴴH + σ²I)⁻¹ √p Hᴴ, one row per stream.
    let g = solve_hpd(&hermitian_part(&cov), &(single_tap.adjoint() * Complex64::from(p.sqrt())), "single-tap equalizer")?;
    let rows = stacked.principal().nrows();
    let mut total = CMat::zeros(rows, rows);
    for h in &stacked.taps {
        let hf = h * &f;
        total += &hf * hf.adjoint();
    }
    for i in 0..rows {
        total[(i, i)] += ONE * sigma2;
    }
    let h0f = stacked.principal() * &f;
    let mut w = CMat::zeros(rows, m);
    for s in 0..m {
        // Columns of `expand` place stream s's equalizer row in tap block r.
        let mut expand = CMat::zeros(rows, taps);
        for r in 0..taps {
            for i in 0..n {
                expand[(r * n + i, r)] = g[(s, i)].conj();
            }
        }
        let gram = hermitian_part(&(expand.adjoint() * &total * &expand));
        let target = CMat::from_column_slice(taps, 1, (expand.adjoint() * h0f.column(s)).as_slice());
        let c = solve_hpd(&gram, &target, "per-stream FIR")?;
        w.set_column(s, &(&expand * c).column(0));
    }
    Ok(TransceiverDesign { precoder: f, decorrelator: w, gamma: vec![1.0; m], memory, power, cap_bits, objective_history: Vec::new() })
}
