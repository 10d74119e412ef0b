//! Per-antenna phase-noise estimation from precoded pilots, decision-feedback
//! tracking, and decentralized compensation for FDD links.
//!
//! Phase vectors are ordered `[receive antennas; transmit antennas]`. Only
//! sums `Δφ_rx[i] + Δφ_tx[j]` are observable, so the first receive antenna is
//! pinned to zero.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelTaps;
use crate::error::{Error, Result};
use crate::linalg::{CMat, J, ZERO};
use crate::precoding::TransceiverDesign;

/// Normal equations above this condition number are regularized.
pub const REGULARIZE_ABOVE_CONDITION: f64 = 1e8;
pub const TIKHONOV: f64 = 1e-8;

/// Accumulated phase estimate of one link direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    pub phi_hat: Vec<f64>,
    pub common_phase: f64,
    pub subframe: usize,
    pub block: usize,
}

impl PhaseEstimate {
    pub fn zero(n_rx: usize, m_tx: usize) -> Self {
        Self { phi_hat: vec![0.0; n_rx + m_tx], common_phase: 0.0, subframe: 0, block: 0 }
    }
}

/// `φ̂[q+1] = φ̂[q] + Δφ̂[q]`.
pub fn accumulate(prev: &PhaseEstimate, delta: &[f64]) -> PhaseEstimate {
    let phi_hat = prev.phi_hat.iter().zip(delta).map(|(p, d)| p + d).collect();
    PhaseEstimate { phi_hat, common_phase: prev.common_phase, subframe: prev.subframe + 1, block: 0 }
}

/// `(1-α) φ̂[p] + α φ̂_DFB[p+1]`.
pub fn fuse_moving_average(history: &PhaseEstimate, dfb: &[f64], alpha: f64) -> Result<PhaseEstimate> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("smoothing factor {alpha} outside [0, 1]")));
    }
    if dfb.len() != history.phi_hat.len() {
        return Err(Error::DimensionMismatch("decision-feedback estimate length".into()));
    }
    let phi_hat = history.phi_hat.iter().zip(dfb).map(|(h, d)| (1.0 - alpha) * h + alpha * d).collect();
    Ok(PhaseEstimate { phi_hat, common_phase: history.common_phase, subframe: history.subframe, block: history.block + 1 })
}

/// Linear model `vec(R) ≈ ζ + Ξ Δφ`, rows ordered stream-fastest.
#[derive(Debug, Clone)]
pub struct LinearizedSystem {
    pub xi: CMat,
    pub zeta: DVector<Complex64>,
    pub n_rx: usize,
    pub m_tx: usize,
}

/// Quantities of the pilot model that depend only on the design and channel.
#[derive(Debug, Clone)]
pub struct PhaseModel {
    /// `W(d)` for `d = -D..=D`.
    w_blocks: Vec<CMat>,
    /// `H[-d]` for `d = -D..=D` (zero outside the channel window).
    h_blocks: Vec<CMat>,
    /// `Σ_d W(d)ᴴ H[-d]`.
    combined: CMat,
    streams: usize,
}

impl PhaseModel {
    pub fn new(design: &TransceiverDesign, taps: &ChannelTaps) -> Self {
        let d = design.memory as isize;
        let (n, m) = (taps.n_rx(), taps.m_tx());
        let w_blocks: Vec<CMat> = (-d..=d).map(|k| design.decorrelator_tap(k)).collect();
        let h_blocks: Vec<CMat> = (-d..=d).map(|k| taps.tap(-k).cloned().unwrap_or_else(|| CMat::zeros(n, m))).collect();
        let combined = w_blocks.iter().zip(&h_blocks).map(|(w, h)| w.adjoint() * h).fold(CMat::zeros(design.streams(), m), |a, b| a + b);
        Self { w_blocks, h_blocks, combined, streams: design.streams() }
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    /// Effective memoryless channel `Σ_d W(d)ᴴ H[-d]`.
    pub fn combined(&self) -> &CMat {
        &self.combined
    }

    /// Builds Ξ and ζ for the transmitted (precoded) block `x` (`M x L`).
    pub fn system(&self, x: &CMat) -> LinearizedSystem {
        let (n, m) = self.h_blocks[0].shape();
        let ns = self.streams;
        let len = x.ncols();
        let mut xi = CMat::zeros(ns * len, n + m);
        let mut zeta = DVector::from_element(ns * len, ZERO);
        let cx = &self.combined * x;
        for k in 0..len {
            let xk = x.column(k);
            let hx: Vec<_> = self.h_blocks.iter().map(|h| h * xk).collect();
            for s in 0..ns {
                let row = k * ns + s;
                zeta[row] = cx[(s, k)];
                for i in 0..n {
                    let mut acc = ZERO;
                    for (w, hxd) in self.w_blocks.iter().zip(&hx) {
                        acc += w[(i, s)].conj() * hxd[i];
                    }
                    xi[(row, i)] = J * acc;
                }
                for j in 0..m {
                    xi[(row, n + j)] = J * self.combined[(s, j)] * xk[j];
                }
            }
        }
        LinearizedSystem { xi, zeta, n_rx: n, m_tx: m }
    }
}

/// Builds the linearized pilot system for precoded pilots `x = F U_P`.
pub fn build_system(design: &TransceiverDesign, taps: &ChannelTaps, pilots: &CMat) -> LinearizedSystem {
    PhaseModel::new(design, taps).system(pilots)
}

/// Pilot system that keeps the in-block ISI left after decorrelation.
///
/// `ζ(k) = Σ_d W(d)ᴴ Σ_w H[w] x(k-d-w)` with `x` zero outside the block, and Ξ is
/// the matching first-order sensitivity.
pub fn build_system_convolved(design: &TransceiverDesign, taps: &ChannelTaps, x: &CMat) -> LinearizedSystem {
    let (n, m) = (taps.n_rx(), taps.m_tx());
    let ns = design.streams();
    let len = x.ncols() as isize;
    let d_max = design.memory as isize;
    let w_max = taps.window as isize;
    let w_adj: Vec<CMat> = (-d_max..=d_max).map(|d| design.decorrelator_tap(d).adjoint()).collect();
    // Noiseless received samples `ŷ(k) = Σ_w H[w] x(k-w)` for k in -D..len+D.
    let y_hat: Vec<DVector<Complex64>> = (-d_max..len + d_max)
        .map(|k| {
            let mut acc = DVector::from_element(n, ZERO);
            for w in -w_max..=w_max {
                let c = k - w;
                if (0..len).contains(&c) {
                    acc += taps.tap(w).expect("tap inside window") * x.column(c as usize);
                }
            }
            acc
        })
        .collect();
    // `G_e = Σ_{d+w=e} W(d)ᴴ H[w]`.
    let e_max = d_max + w_max;
    let g: Vec<CMat> = (-e_max..=e_max)
        .map(|e| {
            let mut acc = CMat::zeros(ns, m);
            for (b, wa) in w_adj.iter().enumerate() {
                if let Some(h) = taps.tap(e - (b as isize - d_max)) {
                    acc += wa * h;
                }
            }
            acc
        })
        .collect();
    let mut xi = CMat::zeros(ns * len as usize, n + m);
    let mut zeta = DVector::from_element(ns * len as usize, ZERO);
    for k in 0..len {
        let base = k as usize * ns;
        for (b, wa) in w_adj.iter().enumerate() {
            let yk = &y_hat[(k - (b as isize - d_max) + d_max) as usize];
            for s in 0..ns {
                for i in 0..n {
                    let term = wa[(s, i)] * yk[i];
                    zeta[base + s] += term;
                    xi[(base + s, i)] += J * term;
                }
            }
        }
        for (idx, ge) in g.iter().enumerate() {
            let c = k - (idx as isize - e_max);
            if !(0..len).contains(&c) {
                continue;
            }
            let xc = x.column(c as usize);
            for s in 0..ns {
                for j in 0..m {
                    xi[(base + s, n + j)] += J * ge[(s, j)] * xc[j];
                }
            }
        }
    }
    LinearizedSystem { xi, zeta, n_rx: n, m_tx: m }
}

/// Received-signal model used to linearize the pilot observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PilotModel {
    /// `ζ(k) = Σ_d W(d)ᴴ H[-d] x(k)`: residual ISI treated as noise.
    Memoryless,
    /// Keeps the in-block residual ISI (see [`build_system_convolved`]).
    #[default]
    Convolved,
}

/// Builds the pilot system for the chosen model.
pub fn pilot_system(kind: PilotModel, design: &TransceiverDesign, taps: &ChannelTaps, x: &CMat) -> LinearizedSystem {
    match kind {
        PilotModel::Memoryless => build_system(design, taps, x),
        PilotModel::Convolved => build_system_convolved(design, taps, x),
    }
}

/// Result of one increment estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementEstimate {
    /// `[Δφ_rx; Δφ_tx]` with `Δφ_rx[0] = 0`.
    pub delta: Vec<f64>,
    pub condition: f64,
    pub regularized: bool,
}

/// `argmin ‖Ξ Δφ - (vec R - ζ)‖²` over real `Δφ` with the reference pinned.
pub fn estimate_increment(system: &LinearizedSystem, rx: &CMat) -> Result<IncrementEstimate> {
    estimate_increment_weighted(system, rx, &vec![1.0; rx.nrows()])
}

/// Per-stream weights that whiten the filtered receiver noise: `1/‖W̃_s‖`.
pub fn noise_whitening_weights(design: &TransceiverDesign) -> Vec<f64> {
    (0..design.streams())
        .map(|s| {
            let norm = design.decorrelator.column(s).norm();
            if norm > 0.0 { 1.0 / norm } else { 0.0 }
        })
        .collect()
}

/// [`estimate_increment`] with the rows of stream `s` scaled by `weights[s]`.
pub fn estimate_increment_weighted(system: &LinearizedSystem, rx: &CMat, weights: &[f64]) -> Result<IncrementEstimate> {
    let rows = system.xi.nrows();
    if rx.len() != rows {
        return Err(Error::DimensionMismatch(format!("{} received values for a {rows}-row system", rx.len())));
    }
    let ns = rx.nrows();
    if weights.len() != ns {
        return Err(Error::DimensionMismatch(format!("{} weights for {ns} streams", weights.len())));
    }
    let unknowns = system.xi.ncols() - 1;
    // Column-major vec(R) with streams fastest matches the row order of Ξ.
    let resid: Vec<Complex64> = (0..rows).map(|r| rx[(r % ns, r / ns)] - system.zeta[r]).collect();
    let mut normal = DMatrix::<f64>::zeros(unknowns, unknowns);
    let mut rhs = DVector::<f64>::zeros(unknowns);
    for (r, res) in resid.iter().enumerate() {
        let row = system.xi.row(r);
        let w2 = weights[r % ns].powi(2);
        let res = res * w2;
        for a in 0..unknowns {
            let xa = row[a + 1];
            rhs[a] += xa.re * res.re + xa.im * res.im;
            for b in a..unknowns {
                let xb = row[b + 1];
                normal[(a, b)] += w2 * (xa.re * xb.re + xa.im * xb.im);
            }
        }
    }
    for a in 0..unknowns {
        for b in 0..a {
            normal[(a, b)] = normal[(b, a)];
        }
    }
    let eig = normal.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let regularized = !(condition <= REGULARIZE_ABOVE_CONDITION);
    if regularized {
        log::warn!("phase-noise system ill-conditioned (condition {condition:.3e}); regularizing");
        for a in 0..unknowns {
            normal[(a, a)] += TIKHONOV;
        }
    }
    let sol = normal
        .cholesky()
        .ok_or_else(|| Error::Singular("phase-noise normal equations".into()))?
        .solve(&rhs);
    let mut delta = vec![0.0];
    delta.extend(sol.iter());
    Ok(IncrementEstimate { delta, condition, regularized })
}

/// Decision-feedback estimate: the pilot estimator applied to detected data symbols.
pub fn estimate_increment_dfb(
    kind: PilotModel,
    design: &TransceiverDesign,
    taps: &ChannelTaps,
    detected: &CMat,
    rx_block: &CMat,
    weights: &[f64],
) -> Result<IncrementEstimate> {
    let system = pilot_system(kind, design, taps, &(&design.precoder * detected));
    estimate_increment_weighted(&system, rx_block, weights)
}

/// Which role a site plays in a link direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Receiver,
    Transmitter,
}

/// Where the common-phase correction is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CommonPhaseSide {
    /// Added to the receive-path correction of the estimating site.
    #[default]
    Receive,
    /// Added to the transmit-path correction of the estimating site.
    Transmit,
}

/// Phase-compensation state held by one site, built from its own receiver's estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTracker {
    /// Accumulated estimates of this site's own antennas.
    pub own: Vec<f64>,
    /// Accumulated common phase error of the link this site receives.
    pub common: f64,
    pub common_side: CommonPhaseSide,
}

/// Per-antenna phase corrections of one site (radians to subtract).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteCorrections {
    pub rx: Vec<f64>,
    pub tx: Vec<f64>,
}

impl SiteTracker {
    pub fn new(antennas: usize, common_side: CommonPhaseSide) -> Self {
        Self { own: vec![0.0; antennas], common: 0.0, common_side }
    }

    /// Books an increment estimated by this site's receiver, weighted by `gain`
    /// (1 for pilots, the smoothing factor for decision feedback).
    ///
    /// `delta` is `[Δφ_own; Δφ_peer]` as solved locally.
    pub fn book(&mut self, delta: &[f64], gain: f64) {
        let n = self.own.len();
        for (o, d) in self.own.iter_mut().zip(&delta[..n]) {
            *o += gain * d;
        }
        self.common += gain * (delta[0] + delta[n]);
    }

    pub fn corrections(&self) -> SiteCorrections {
        plan_fdd_compensation(self)
    }
}

/// Corrections applied by one site, from that site's state only.
pub fn plan_fdd_compensation(site: &SiteTracker) -> SiteCorrections {
    let with_common: Vec<f64> = site.own.iter().map(|p| p + site.common).collect();
    match site.common_side {
        CommonPhaseSide::Receive => SiteCorrections { rx: with_common, tx: site.own.clone() },
        CommonPhaseSide::Transmit => SiteCorrections { rx: site.own.clone(), tx: with_common },
    }
}

/// Sum phases `φ_rx[i] + φ_tx[j]` of an `[rx; tx]` vector, row-major in `i`.
pub fn sum_phases(phi: &[f64], n_rx: usize) -> Vec<f64> {
    let (rx, tx) = phi.split_at(n_rx);
    rx.iter().flat_map(|r| tx.iter().map(move |t| r + t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pinv, ONE};
    use crate::precoding::{optimize, DesignParams};
    use crate::testutil::{convolve, random_taps, random_unimodular_set, rng};
    use rand::Rng;

    const N: usize = 4;

    struct Fixture {
        design: TransceiverDesign,
        taps: ChannelTaps,
        x: CMat,
    }

    fn fixture(seed: u64, len: usize) -> Fixture {
        let mut r = rng(seed);
        let mut taps = random_taps(N, N, 1, &mut r);
        // A dominant principal tap, as after timing compensation.
        taps.taps[1] += CMat::identity(N, N).scale(3.0);
        let params = DesignParams { sigma2: 1e-3, power: N as f64, cap_bits: 12.0, memory: 1, max_iters: 50, tol: 1e-8 };
        let design = optimize(&taps, &params).unwrap();
        let pilots = random_unimodular_set(N, len, &mut r);
        let u = CMat::from_fn(N, len, |j, k| pilots.sequences[j][k]);
        let x = &design.precoder * u;
        Fixture { design, taps, x }
    }

    /// Decorrelated block `r(k) = Σ_d W(d)ᴴ y(k-d)` with per-antenna phases applied to the channel.
    fn observe(f: &Fixture, phi: &[f64]) -> CMat {
        let rotated = f.taps.rotated(&phi[..N], &phi[N..]);
        let len = f.x.ncols();
        let d = f.design.memory;
        let cols: Vec<Vec<Complex64>> = (0..len).map(|k| f.x.column(k).iter().copied().collect()).collect();
        // Shift by D so that y(-D..len+D) is available.
        let padded: Vec<Vec<Complex64>> = std::iter::repeat_n(vec![ZERO; N], d).chain(cols).collect();
        let y = convolve(&rotated, &padded, len + 2 * d);
        let mut r = CMat::zeros(f.design.streams(), len);
        for k in 0..len {
            for dd in -(d as isize)..=d as isize {
                let col = (k as isize - dd + d as isize) as usize;
                if col < y.ncols() {
                    r.set_column(k, &(r.column(k) + f.design.decorrelator_tap(dd).adjoint() * y.column(col)));
                }
            }
        }
        r
    }

    fn vec_of(r: &CMat) -> DVector<Complex64> {
        DVector::from_column_slice(r.as_slice())
    }

    fn random_phases(scale: f64, seed: u64) -> Vec<f64> {
        let mut r = rng(seed);
        (0..2 * N).map(|_| r.gen_range(-scale..scale)).collect()
    }

    fn max_sum_error(est: &[f64], truth: &[f64]) -> f64 {
        sum_phases(est, N).iter().zip(sum_phases(truth, N)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_increment_reproduces_the_observation() {
        let f = fixture(1, 16);
        let r = observe(&f, &[0.0; 2 * N]);
        let conv = build_system_convolved(&f.design, &f.taps, &f.x);
        assert!((vec_of(&r) - &conv.zeta).norm() < 1e-12 * r.norm());
        let est = estimate_increment(&conv, &r).unwrap();
        assert!(est.delta.iter().all(|d| d.abs() < 1e-12));
        // Without the ISI terms the memoryless model is only approximate.
        let memless = build_system(&f.design, &f.taps, &f.x);
        assert!((vec_of(&r) - &memless.zeta).norm() > 1e-6 * r.norm());
    }

    #[test]
    fn scalar_system_by_hand() {
        let design = TransceiverDesign {
            precoder: CMat::from_element(1, 1, ONE),
            decorrelator: CMat::from_element(1, 1, ONE),
            gamma: vec![1.0],
            memory: 0,
            power: 1.0,
            cap_bits: 12.0,
            objective_history: vec![],
        };
        let taps = ChannelTaps::new(vec![CMat::from_element(1, 1, ONE)], 0).unwrap();
        let x = CMat::from_element(1, 1, ONE);
        for kind in [PilotModel::Memoryless, PilotModel::Convolved] {
            let sys = pilot_system(kind, &design, &taps, &x);
            assert_eq!(sys.zeta[0], ONE);
            assert_eq!(sys.xi.row(0).iter().copied().collect::<Vec<_>>(), vec![J, J]);
        }
    }

    #[test]
    fn linearization_error_is_quadratic() {
        let f = fixture(2, 32);
        let sys = build_system_convolved(&f.design, &f.taps, &f.x);
        let phi = random_phases(0.02, 3);
        let resid = |scale: f64| {
            let p: Vec<f64> = phi.iter().map(|v| v * scale).collect();
            let lin = &sys.zeta + &sys.xi * DVector::from_iterator(2 * N, p.iter().map(|&v| Complex64::new(v, 0.0)));
            (vec_of(&observe(&f, &p)) - lin).norm()
        };
        let ratio = resid(1.0) / resid(0.5);
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn noiseless_injected_increments_are_recovered() {
        let f = fixture(4, 64);
        let sys = build_system_convolved(&f.design, &f.taps, &f.x);
        for seed in 0..5 {
            let truth = random_phases(0.01, 10 + seed);
            let est = estimate_increment(&sys, &observe(&f, &truth)).unwrap();
            assert_eq!(est.delta[0], 0.0);
            assert!(!est.regularized);
            assert!(max_sum_error(&est.delta, &truth) < 1e-4);
        }
        // Exact up to linearization error for larger increments too.
        let err = |s: f64| {
            let truth = random_phases(s, 20);
            max_sum_error(&estimate_increment(&sys, &observe(&f, &truth)).unwrap().delta, &truth)
        };
        assert!(err(0.05) < 2e-3);
        assert!(err(0.05) > 2.0 * err(0.025));
    }

    #[test]
    fn weighted_ls_matches_a_generic_solver() {
        let f = fixture(5, 12);
        let sys = build_system_convolved(&f.design, &f.taps, &f.x);
        let mut r = rng(6);
        let rx = observe(&f, &random_phases(0.01, 7)).map(|z| z + Complex64::new(r.gen_range(-0.01..0.01), r.gen_range(-0.01..0.01)));
        let weights: Vec<f64> = (0..N).map(|s| 0.5 + s as f64).collect();
        let est = estimate_increment_weighted(&sys, &rx, &weights).unwrap();
        let rows = sys.xi.nrows();
        let resid = vec_of(&rx) - &sys.zeta;
        let a = CMat::from_fn(2 * rows, 2 * N - 1, |row, c| {
            let v = sys.xi[(row % rows, c + 1)] * weights[(row % rows) % N];
            Complex64::new(if row < rows { v.re } else { v.im }, 0.0)
        });
        let b = CMat::from_fn(2 * rows, 1, |row, _| {
            let v = resid[row % rows] * weights[(row % rows) % N];
            Complex64::new(if row < rows { v.re } else { v.im }, 0.0)
        });
        let oracle = pinv(&a).unwrap() * b;
        for (e, o) in est.delta[1..].iter().zip(oracle.iter()) {
            assert!((e - o.re).abs() < 1e-9);
        }
        let unit = estimate_increment(&sys, &rx).unwrap();
        assert_eq!(unit, estimate_increment_weighted(&sys, &rx, &[1.0; N]).unwrap());
        assert!(estimate_increment_weighted(&sys, &rx, &[1.0; 3]).is_err());
    }

    #[test]
    fn whitening_weights_are_inverse_column_norms() {
        let f = fixture(8, 4);
        let w = noise_whitening_weights(&f.design);
        for (s, wt) in w.iter().enumerate() {
            assert!((wt * f.design.decorrelator.column(s).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unobservable_gauges_are_regularized() {
        // Two decoupled polarizations: the relative phase of the second is unobservable.
        let design = TransceiverDesign {
            precoder: CMat::identity(2, 2),
            decorrelator: CMat::identity(2, 2),
            gamma: vec![1.0; 2],
            memory: 0,
            power: 2.0,
            cap_bits: 12.0,
            objective_history: vec![],
        };
        let taps = ChannelTaps::new(vec![CMat::identity(2, 2)], 0).unwrap();
        let x = CMat::identity(2, 2);
        let sys = build_system(&design, &taps, &x);
        let est = estimate_increment(&sys, &sys.zeta.clone().reshape_generic(nalgebra::Dyn(2), nalgebra::Dyn(2))).unwrap();
        assert!(est.regularized);
        assert!(est.delta.iter().all(|d| d.is_finite()));
    }

    #[test]
    fn decision_feedback_uses_the_pilot_math() {
        let f = fixture(9, 20);
        let mut r = rng(10);
        let qpsk = |r: &mut rand_chacha::ChaCha8Rng| Complex64::new(if r.gen() { 1.0 } else { -1.0 }, if r.gen() { 1.0 } else { -1.0 }).scale(0.5f64.sqrt());
        let symbols = CMat::from_fn(N, 20, |_, _| qpsk(&mut r));
        let x = &f.design.precoder * &symbols;
        let g = Fixture { design: f.design.clone(), taps: f.taps.clone(), x: x.clone() };
        let truth = random_phases(0.01, 11);
        let rx = observe(&g, &truth);
        let weights = noise_whitening_weights(&g.design);
        let dfb = estimate_increment_dfb(PilotModel::Convolved, &g.design, &g.taps, &symbols, &rx, &weights).unwrap();
        let pilot = estimate_increment_weighted(&build_system_convolved(&g.design, &g.taps, &x), &rx, &weights).unwrap();
        assert_eq!(dfb, pilot);
        let zero = estimate_increment_dfb(PilotModel::Convolved, &g.design, &g.taps, &symbols, &observe(&g, &[0.0; 2 * N]), &weights).unwrap();
        assert!(zero.delta.iter().all(|d| d.abs() < 1e-12));
        // Corrupting a growing share of the fed-back symbols degrades the estimate.
        let errors: Vec<f64> = [0.0, 0.01, 0.05]
            .iter()
            .map(|&rate| {
                let mut r = rng(12);
                let trials = 40;
                (0..trials)
                    .map(|_| {
                        let fed = symbols.map(|z| if r.gen::<f64>() < rate { -z } else { z });
                        let est = estimate_increment_dfb(PilotModel::Convolved, &g.design, &g.taps, &fed, &rx, &weights).unwrap();
                        max_sum_error(&est.delta, &truth)
                    })
                    .sum::<f64>()
                    / trials as f64
            })
            .collect();
        assert!(errors[0] < errors[1] && errors[1] < errors[2], "{errors:?}");
    }

    #[test]
    fn accumulation_and_fusion_arithmetic() {
        let start = PhaseEstimate::zero(1, 1);
        assert_eq!(accumulate(&start, &[0.0, 0.0]).phi_hat, start.phi_hat);
        let two = accumulate(&accumulate(&start, &[0.0, 0.01]), &[0.0, 0.02]);
        assert!((two.phi_hat[1] - 0.03).abs() < 1e-15);
        assert_eq!(two.subframe, 2);
        let incs: Vec<f64> = (0..99).map(|q| 1e-3 * (q as f64).sin()).collect();
        let total = incs.iter().fold(start.clone(), |acc, d| accumulate(&acc, &[0.0, *d]));
        assert!((total.phi_hat[1] - incs.iter().sum::<f64>()).abs() < 1e-15);

        let hist = PhaseEstimate { phi_hat: vec![0.0, 0.01], ..start.clone() };
        assert_eq!(fuse_moving_average(&hist, &[0.0, 0.02], 0.0).unwrap().phi_hat, hist.phi_hat);
        assert_eq!(fuse_moving_average(&hist, &[0.0, 0.02], 1.0).unwrap().phi_hat, vec![0.0, 0.02]);
        assert!((fuse_moving_average(&hist, &[0.0, 0.02], 0.1).unwrap().phi_hat[1] - 0.011).abs() < 1e-15);
        assert!(fuse_moving_average(&hist, &[0.0, 0.02], 1.5).is_err());
    }

    #[test]
    fn zero_phase_noise_needs_no_correction() {
        let site = SiteTracker::new(3, CommonPhaseSide::Receive);
        assert_eq!(site.corrections(), SiteCorrections { rx: vec![0.0; 3], tx: vec![0.0; 3] });
    }

    /// Exact linear observations of one direction, solved by that direction's receiver.
    fn solve_direction(rx_inc: &[f64], tx_inc: &[f64]) -> Vec<f64> {
        let f = fixture(13, 24);
        let sys = build_system_convolved(&f.design, &f.taps, &f.x);
        let truth: Vec<f64> = rx_inc.iter().chain(tx_inc).copied().collect();
        let lin = &sys.zeta + &sys.xi * DVector::from_iterator(2 * N, truth.iter().map(|&v| Complex64::new(v, 0.0)));
        let r = lin.reshape_generic(nalgebra::Dyn(N), nalgebra::Dyn(24));
        estimate_increment(&sys, &r).unwrap().delta
    }

    #[test]
    fn decentralized_fdd_compensation_cancels_every_link() {
        let mut r = rng(14);
        for side in [CommonPhaseSide::Receive, CommonPhaseSide::Transmit] {
            let (mut site_a, mut site_b) = (SiteTracker::new(N, side), SiteTracker::new(N, side));
            let (mut theta_a, mut theta_b) = (vec![0.0; N], vec![0.0; N]);
            for _ in 0..10 {
                let inc_a: Vec<f64> = (0..N).map(|_| r.gen_range(-0.01..0.01)).collect();
                let inc_b: Vec<f64> = (0..N).map(|_| r.gen_range(-0.01..0.01)).collect();
                theta_a.iter_mut().zip(&inc_a).for_each(|(t, d)| *t += d);
                theta_b.iter_mut().zip(&inc_b).for_each(|(t, d)| *t += d);
                // Uplink A -> B is estimated at B, downlink B -> A at A.
                site_b.book(&solve_direction(&inc_b, &inc_a), 1.0);
                site_a.book(&solve_direction(&inc_a, &inc_b), 1.0);
            }
            let (ca, cb) = (plan_fdd_compensation(&site_a), plan_fdd_compensation(&site_b));
            for i in 0..N {
                for j in 0..N {
                    let uplink = (theta_b[i] - cb.rx[i]) + (theta_a[j] - ca.tx[j]);
                    let downlink = (theta_a[i] - ca.rx[i]) + (theta_b[j] - cb.tx[j]);
                    assert!(uplink.abs() < 1e-4 && downlink.abs() < 1e-4, "{side:?}: {uplink} {downlink}");
                }
            }
        }
    }
}
