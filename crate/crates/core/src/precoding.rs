//! Precoder and memory-decorrelator design.
//!
//! The capped sum-rate problem is replaced by a weighted-MSE surrogate and
//! solved by alternating over the decorrelator, the weights and the
//! precoder. Each block update is exact, so the surrogate never increases.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelTaps;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, solve_hpd, CMat, ONE, ZERO};

/// Stacked taps `H̃[w']`, `w' = -(D+W)..=(D+W)`, each `N(2D+1) x M`.
///
/// Row block `r` of `H̃[w']` is `H[w' + D - r]`, matching the stacked
/// observation `[y(k+D); ...; y(k-D)]`.
#[derive(Debug, Clone)]
pub struct StackedTapChannel {
    pub taps: Vec<CMat>,
    pub memory: usize,
    pub n_rx: usize,
}

impl StackedTapChannel {
    pub fn half_width(&self) -> usize {
        self.taps.len() / 2
    }

    /// `H̃[w']`.
    pub fn tap(&self, w: isize) -> &CMat {
        &self.taps[(w + self.half_width() as isize) as usize]
    }

    pub fn principal(&self) -> &CMat {
        self.tap(0)
    }

    pub fn m_tx(&self) -> usize {
        self.taps[0].ncols()
    }

    /// Iterator over `(w', H̃[w'])` with `w' != 0`.
    pub fn interference(&self) -> impl Iterator<Item = &CMat> {
        let mid = self.half_width();
        self.taps.iter().enumerate().filter(move |(i, _)| *i != mid).map(|(_, t)| t)
    }
}

pub fn stack_channel(taps: &ChannelTaps, memory: usize) -> StackedTapChannel {
    let (n, m) = (taps.n_rx(), taps.m_tx());
    let half = (memory + taps.window) as isize;
    let d = memory as isize;
    let stacked = (-half..=half)
        .map(|w| {
            let mut out = CMat::zeros(n * (2 * memory + 1), m);
            for r in 0..=2 * memory {
                if let Some(h) = taps.tap(w + d - r as isize) {
                    out.view_mut((r * n, 0), (n, m)).copy_from(h);
                }
            }
            out
        })
        .collect();
    StackedTapChannel { taps: stacked, memory, n_rx: n }
}

/// Precoder, decorrelator and weights of one link direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransceiverDesign {
    pub precoder: CMat,
    pub decorrelator: CMat,
    pub gamma: Vec<f64>,
    pub memory: usize,
    pub power: f64,
    pub cap_bits: f64,
    /// Surrogate objective after each iteration (empty for closed-form designs).
    pub objective_history: Vec<f64>,
}

impl TransceiverDesign {
    pub fn streams(&self) -> usize {
        self.precoder.ncols()
    }

    /// Decorrelator block `W(d)`, `d = -D..=D`.
    pub fn decorrelator_tap(&self, d: isize) -> CMat {
        let n = self.decorrelator.nrows() / (2 * self.memory + 1);
        let block = (d + self.memory as isize) as usize;
        self.decorrelator.rows(block * n, n).into_owned()
    }
}

/// Sum of `H̃[w'] F Fᴴ H̃[w']ᴴ` over `w' != 0`.
fn interference_covariance(f: &CMat, stacked: &StackedTapChannel) -> CMat {
    let rows = stacked.principal().nrows();
    let mut acc = CMat::zeros(rows, rows);
    for h in stacked.interference() {
        let hf = h * f;
        acc += &hf * hf.adjoint();
    }
    acc
}

/// `E(W̃, F)`: the stream error covariance.
pub fn mse_matrix(w: &CMat, f: &CMat, stacked: &StackedTapChannel, sigma2: f64) -> CMat {
    let ns = f.ncols();
    let eye = CMat::identity(ns, ns);
    let signal = w.adjoint() * stacked.principal() * f - &eye;
    let mut cov = interference_covariance(f, stacked);
    for i in 0..cov.nrows() {
        cov[(i, i)] += ONE * sigma2;
    }
    hermitian_part(&(&signal * signal.adjoint() + w.adjoint() * cov * w))
}

/// `W̃ = B⁻¹ H̃[0] F` with `B` the total received covariance.
pub fn update_decorrelator(f: &CMat, stacked: &StackedTapChannel, sigma2: f64) -> Result<CMat> {
    let h0f = stacked.principal() * f;
    let mut b = interference_covariance(f, stacked) + &h0f * h0f.adjoint();
    for i in 0..b.nrows() {
        b[(i, i)] += ONE * sigma2;
    }
    solve_hpd(&hermitian_part(&b), &h0f, "decorrelator covariance")
}

/// Streams below this fraction of the per-stream power budget count as inactive.
pub const INACTIVE_STREAM_POWER: f64 = 1e-4;

/// Replaces the (vanishing) decorrelator columns of inactive streams with the
/// MMSE combiner of a unit-power stream along the unused precoder directions.
///
/// Inactive streams carry no signal, so rates are unchanged, but pilot-based
/// phase estimation keeps one observation per stream.
pub fn fill_inactive_streams(mut w: CMat, f: &CMat, stacked: &StackedTapChannel, sigma2: f64, power: f64) -> Result<CMat> {
    let ns = f.ncols();
    let threshold = INACTIVE_STREAM_POWER * power / ns as f64;
    let inactive: Vec<usize> = (0..ns).filter(|&s| f.column(s).norm_squared() < threshold).collect();
    if inactive.is_empty() {
        return Ok(w);
    }
    let mut active = f.clone();
    for &s in &inactive {
        active.column_mut(s).fill(ZERO);
    }
    // Least-used transmit directions first.
    let eig = hermitian_part(&(&active * active.adjoint())).symmetric_eigen();
    let order: Vec<usize> = {
        let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        idx
    };
    let h0 = stacked.principal();
    let mut cov = interference_covariance(&active, stacked) + (h0 * &active) * (h0 * &active).adjoint();
    for i in 0..cov.nrows() {
        cov[(i, i)] += ONE * sigma2;
    }
    for (&s, &e) in inactive.iter().zip(&order) {
        let direction = h0 * eig.eigenvectors.column(e);
        let direction = CMat::from_column_slice(direction.len(), 1, direction.as_slice());
        let total = hermitian_part(&(&cov + &direction * direction.adjoint()));
        let combiner = solve_hpd(&total, &direction, "inactive-stream covariance")?;
        w.set_column(s, &combiner.column(0));
    }
    Ok(w)
}

/// `Γ_mm = min(1/E_mm, 2^ϖ)`.
pub fn update_gamma(e: &CMat, cap_bits: f64) -> Result<Vec<f64>> {
    let cap = cap_bits.exp2();
    (0..e.nrows())
        .map(|m| {
            let emm = e[(m, m)].re;
            if emm > 0.0 && emm.is_finite() {
                Ok((1.0 / emm).min(cap))
            } else {
                Err(Error::NumericalDegeneracy(format!("error covariance diagonal {emm} at stream {m}")))
            }
        })
        .collect()
}

fn scale_columns(w: &CMat, gamma: &[f64]) -> CMat {
    let mut out = w.clone();
    for (c, g) in gamma.iter().enumerate() {
        out.column_mut(c).scale_mut(*g);
    }
    out
}

/// Weighted-MSE-optimal precoder under `Tr(FᴴF) <= P`.
///
/// `F(μ) = (A + μI)⁻¹ H̃[0]ᴴ W̃ Γ`, `A = Σ_{w'} H̃[w']ᴴ W̃ Γ W̃ᴴ H̃[w']`, with
/// the multiplier `μ` found by bisection when the constraint is active.
pub fn update_precoder(w: &CMat, gamma: &[f64], stacked: &StackedTapChannel, power: f64) -> Result<CMat> {
    let wg = scale_columns(w, gamma);
    let m = stacked.m_tx();
    let mut a = CMat::zeros(m, m);
    for h in &stacked.taps {
        let hw = h.adjoint() * w;
        a += &hw * scale_columns(&hw, gamma).adjoint();
    }
    let a = hermitian_part(&a);
    let c = stacked.principal().adjoint() * wg;
    let eig = a.symmetric_eigen();
    let vc = eig.eigenvectors.adjoint() * &c;
    let weights: Vec<f64> = (0..m).map(|i| vc.row(i).norm_squared()).collect();
    let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let trace_at = |mu: f64| -> f64 { weights.iter().zip(&lambdas).map(|(c2, l)| c2 / (l + mu).powi(2)).sum() };
    let lambda_floor = 1e-14 * lambdas.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let singular = lambdas.iter().zip(&weights).any(|(l, c2)| *l <= lambda_floor && *c2 > 0.0);
    let mu = if !singular && trace_at(0.0) <= power {
        0.0
    } else {
        let total: f64 = weights.iter().sum();
        let mut hi = (total / power).sqrt().max(f64::MIN_POSITIVE);
        let mut lo = 0.0;
        assert!(trace_at(hi) <= power * (1.0 + 1e-12), "power multiplier bracket");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if trace_at(mid) > power {
                lo = mid;
            } else {
                hi = mid;
            }
            if (trace_at(hi) - power).abs() < 1e-10 * power {
                break;
            }
        }
        hi
    };
    let inv: Vec<f64> = lambdas.iter().map(|l| 1.0 / (l + mu)).collect();
    let mut scaled = vc;
    for (i, s) in inv.iter().enumerate() {
        scaled.row_mut(i).scale_mut(*s);
    }
    Ok(&eig.eigenvectors * scaled)
}

/// `Tr(Γ E) - ln det Γ`.
pub fn surrogate_objective(w: &CMat, f: &CMat, gamma: &[f64], stacked: &StackedTapChannel, sigma2: f64) -> f64 {
    let e = mse_matrix(w, f, stacked, sigma2);
    gamma.iter().enumerate().map(|(m, g)| g * e[(m, m)].re - g.ln()).sum()
}

/// Options for [`optimize`].
#[derive(Debug, Clone, Copy)]
pub struct DesignParams {
    pub sigma2: f64,
    pub power: f64,
    pub cap_bits: f64,
    pub memory: usize,
    pub max_iters: usize,
    pub tol: f64,
}

/// Alternating optimization of decorrelator, weights and precoder.
pub fn optimize(taps: &ChannelTaps, params: &DesignParams) -> Result<TransceiverDesign> {
    let stacked = stack_channel(taps, params.memory);
    optimize_stacked(&stacked, params)
}

pub fn optimize_stacked(stacked: &StackedTapChannel, params: &DesignParams) -> Result<TransceiverDesign> {
    if !(params.sigma2 > 0.0) || !(params.power > 0.0) {
        return Err(Error::InvalidParameter("noise variance and power must be positive".into()));
    }
    let m = stacked.m_tx();
    let ns = m.min(stacked.n_rx);
    let mut f = CMat::identity(m, ns).scale((params.power / ns as f64).sqrt());
    let mut gamma = vec![params.cap_bits.exp2(); ns];
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..params.max_iters {
        let w = update_decorrelator(&f, stacked, params.sigma2)?;
        gamma = update_gamma(&mse_matrix(&w, &f, stacked, params.sigma2), params.cap_bits)?;
        f = update_precoder(&w, &gamma, stacked, params.power)?;
        let obj = surrogate_objective(&w, &f, &gamma, stacked, params.sigma2);
        history.push(obj);
        if prev.is_finite() && (prev - obj).abs() <= params.tol * prev.abs().max(1e-12) {
            break;
        }
        prev = obj;
    }
    // Final decorrelator matched to the final precoder.
    let w = update_decorrelator(&f, stacked, params.sigma2)?;
    let w = fill_inactive_streams(w, &f, stacked, params.sigma2, params.power)?;
    Ok(TransceiverDesign {
        precoder: f,
        decorrelator: w,
        gamma,
        memory: stacked.memory,
        power: params.power,
        cap_bits: params.cap_bits,
        objective_history: history,
    })
}

/// Per-stream signal and interference-plus-noise powers.
pub fn stream_powers(design: &TransceiverDesign, stacked: &StackedTapChannel, sigma2: f64, stream: usize) -> (f64, f64) {
    let w = design.decorrelator.column(stream);
    let h0f = w.adjoint() * stacked.principal() * &design.precoder;
    let signal = h0f[(0, stream)].norm_sqr();
    let mai: f64 = (0..h0f.ncols()).filter(|&c| c != stream).map(|c| h0f[(0, c)].norm_sqr()).sum();
    let isi: f64 = stacked.interference().map(|h| (w.adjoint() * h * &design.precoder).norm_squared()).sum();
    (signal, mai + isi + sigma2 * w.norm_squared())
}

/// Predicted SINR of one stream (linear).
pub fn sinr(design: &TransceiverDesign, stacked: &StackedTapChannel, sigma2: f64, stream: usize) -> f64 {
    let (s, n) = stream_powers(design, stacked, sigma2, stream);
    if n > 0.0 { s / n } else if s > 0.0 { f64::INFINITY } else { 0.0 }
}

/// `Σ_m min(log2(1 + SINR_m), ϖ)`.
pub fn sum_rate(design: &TransceiverDesign, stacked: &StackedTapChannel, sigma2: f64) -> f64 {
    (0..design.streams())
        .map(|m| (1.0 + sinr(design, stacked, sigma2, m)).log2().min(design.cap_bits))
        .sum()
}

/// Singular-vector transceiver on the principal tap with equal power.
pub fn svd_baseline(taps: &ChannelTaps, power: f64, memory: usize, cap_bits: f64) -> Result<TransceiverDesign> {
    let h0 = taps.principal();
    let (n, m) = h0.shape();
    let ns = n.min(m);
    let svd = h0.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::NumericalDegeneracy("SVD left factor".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::NumericalDegeneracy("SVD right factor".into()))?;
    let order = descending_order(svd.singular_values.as_slice());
    let v = v_t.adjoint();
    let mut f = CMat::zeros(m, ns);
    let mut w = CMat::zeros(n * (2 * memory + 1), ns);
    let scale = (power / ns as f64).sqrt();
    for (c, &idx) in order.iter().take(ns).enumerate() {
        f.set_column(c, &v.column(idx).scale(scale));
        w.view_mut((memory * n, c), (n, 1)).copy_from(&u.column(idx));
    }
    Ok(TransceiverDesign {
        precoder: f,
        decorrelator: w,
        gamma: vec![1.0; ns],
        memory,
        power,
        cap_bits,
        objective_history: Vec::new(),
    })
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

/// Per-stream complex gains `w̃_mᴴ H̃[0] f_m` used to normalize detector outputs.
pub fn stream_gains(design: &TransceiverDesign, stacked: &StackedTapChannel) -> Vec<num_complex::Complex64> {
    let g = design.decorrelator.adjoint() * stacked.principal() * &design.precoder;
    (0..design.streams()).map(|m| g[(m, m)]).collect()
}
