//! Timing offsets, Wiener phase noise and AWGN.
//!
//! Both link directions of a site share one oscillator and one sampling
//! clock, so a site's offsets and phase trajectory are drawn once and reused
//! for its transmit and receive roles.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng_indexed, Stream};

/// Per-antenna timing offsets of one link, in symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingOffsets {
    pub tau_rx: Vec<f64>,
    pub tau_tx: Vec<f64>,
    pub tau_max: f64,
}

impl TimingOffsets {
    pub fn zero(n: usize, m: usize) -> Self {
        Self { tau_rx: vec![0.0; n], tau_tx: vec![0.0; m], tau_max: 0.0 }
    }

    /// Sum offsets `τ_rx[i] + τ_tx[j]`, row-major in `i`.
    pub fn sum_offsets(&self) -> Vec<f64> {
        self.tau_rx.iter().flat_map(|r| self.tau_tx.iter().map(move |t| r + t)).collect()
    }

    /// Per-antenna vector `[τ_rx; τ_tx]`.
    pub fn stacked(&self) -> Vec<f64> {
        self.tau_rx.iter().chain(&self.tau_tx).copied().collect()
    }
}

fn uniform_offsets(count: usize, tau_max: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..count).map(|_| if tau_max > 0.0 { rng.gen_range(0.0..tau_max) } else { 0.0 }).collect()
}

fn check_tau_max(tau_max: f64) -> Result<()> {
    if !(tau_max >= 0.0) || !tau_max.is_finite() {
        return Err(Error::InvalidParameter(format!("tau_max {tau_max} must be finite and nonnegative")));
    }
    if tau_max < 1.0 && tau_max > 0.0 {
        log::warn!("tau_max = {tau_max} symbols is below the one-symbol regime the offset model assumes");
    }
    Ok(())
}

/// Draws offsets uniform on `[0, τ_max)` with the first receive antenna as the zero reference.
pub fn draw_timing_offsets(n: usize, m: usize, tau_max: f64, seed: u64) -> Result<TimingOffsets> {
    check_tau_max(tau_max)?;
    let mut rng = stream_rng_indexed(seed, Stream::Timing, 0);
    let mut tau_rx = uniform_offsets(n, tau_max, &mut rng);
    let tau_tx = uniform_offsets(m, tau_max, &mut rng);
    if let Some(first) = tau_rx.first_mut() {
        *first = 0.0;
    }
    Ok(TimingOffsets { tau_rx, tau_tx, tau_max })
}

/// Offsets of one site's antennas; antenna 0 is that site's reference.
pub fn draw_site_offsets(count: usize, tau_max: f64, seed: u64, site: u64) -> Result<Vec<f64>> {
    check_tau_max(tau_max)?;
    let mut rng = stream_rng_indexed(seed, Stream::Timing, 1 + site);
    let mut tau = uniform_offsets(count, tau_max, &mut rng);
    if let Some(first) = tau.first_mut() {
        *first = 0.0;
    }
    Ok(tau)
}

/// Wiener phase-noise increment variance `2π c T_s` for a Lorentzian 3 dB bandwidth `c`.
pub fn phn_variance(c_3db: f64, t_s: f64) -> Result<f64> {
    if c_3db < 0.0 || !(t_s > 0.0) {
        return Err(Error::InvalidParameter("need c >= 0 and T_s > 0".into()));
    }
    Ok(TAU * c_3db * t_s)
}

/// Instantaneous oscillator phases of both ends of a link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseNoiseState {
    pub theta_tx: Vec<f64>,
    pub theta_rx: Vec<f64>,
    pub sigma2_per_sample: f64,
    pub sample_index: u64,
}

impl PhaseNoiseState {
    /// Initial phases uniform on `[0, 2π)`.
    pub fn random(n: usize, m: usize, sigma2: f64, seed: u64) -> Self {
        let mut rng = stream_rng_indexed(seed, Stream::PhaseNoise, 0);
        let theta_rx = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
        let theta_tx = (0..m).map(|_| rng.gen_range(0.0..TAU)).collect();
        Self { theta_tx, theta_rx, sigma2_per_sample: sigma2, sample_index: 0 }
    }

    /// Sum phases `θ_rx[i] + θ_tx[j]`, row-major in `i`.
    pub fn sum_phases(&self) -> Vec<f64> {
        self.theta_rx.iter().flat_map(|r| self.theta_tx.iter().map(move |t| r + t)).collect()
    }
}

/// Advances every phase by `n_steps` Wiener increments.
pub fn step_phase_noise(state: &PhaseNoiseState, n_steps: u64, seed: u64) -> PhaseNoiseState {
    let mut next = state.clone();
    if n_steps == 0 {
        return next;
    }
    let mut rng = stream_rng_indexed(seed, Stream::PhaseNoise, 1 + state.sample_index);
    let sd = state.sigma2_per_sample.sqrt();
    for _ in 0..n_steps {
        for th in next.theta_rx.iter_mut().chain(next.theta_tx.iter_mut()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *th += sd * z;
        }
    }
    next.sample_index += n_steps;
    next
}

/// Per-symbol phase trajectories of one site's oscillators, `[antenna][symbol]`.
#[derive(Debug, Clone)]
pub struct PhaseTrajectory {
    pub phases: Vec<Vec<f64>>,
}

impl PhaseTrajectory {
    /// Wiener trajectories of `len` symbols started from a uniform phase.
    pub fn wiener(antennas: usize, len: usize, sigma2: f64, seed: u64, site: u64) -> Result<Self> {
        if !(sigma2 >= 0.0) {
            return Err(Error::InvalidParameter(format!("phase-noise variance {sigma2} must be nonnegative")));
        }
        let mut rng = stream_rng_indexed(seed, Stream::PhaseNoise, 1000 + site);
        let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let phases = (0..antennas)
            .map(|_| {
                let mut theta = rng.gen_range(0.0..TAU);
                (0..len)
                    .map(|k| {
                        if k > 0 {
                            theta += normal.sample(&mut rng);
                        }
                        theta
                    })
                    .collect()
            })
            .collect();
        Ok(Self { phases })
    }

    /// Constant phases (no drift).
    pub fn constant(values: &[f64], len: usize) -> Self {
        Self { phases: values.iter().map(|&v| vec![v; len]).collect() }
    }

    pub fn antennas(&self) -> usize {
        self.phases.len()
    }

    pub fn len(&self) -> usize {
        self.phases.first().map(Vec::len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Phases of all antennas at symbol `k` (clamped to the last sample).
    pub fn at(&self, k: usize) -> Vec<f64> {
        self.phases.iter().map(|p| p[k.min(p.len() - 1)]).collect()
    }

    /// Mean phase of each antenna over symbols `range`.
    pub fn mean_over(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        let len = range.len().max(1) as f64;
        self.phases.iter().map(|p| p[range.clone()].iter().sum::<f64>() / len).collect()
    }
}

/// Noise variance for a given SNR with unit signal power.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Draws one circularly-symmetric complex Gaussian sample of variance `sigma2`.
pub fn complex_gaussian(rng: &mut ChaCha8Rng, sigma2: f64) -> Complex64 {
    let sd = (sigma2 / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(sd * re, sd * im)
}

/// Adds complex white Gaussian noise of variance `sigma2` in place.
pub fn add_awgn(signal: &mut [Complex64], sigma2: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance {sigma2} must be nonnegative")));
    }
    if sigma2 == 0.0 {
        return Ok(());
    }
    for s in signal.iter_mut() {
        *s += complex_gaussian(rng, sigma2);
    }
    Ok(())
}

/// Timing offsets as CSV: `role,antenna,tau`.
pub fn offsets_to_csv(to: &TimingOffsets) -> String {
    let mut out = String::from("role,antenna,tau_symbols\n");
    for (i, t) in to.tau_rx.iter().enumerate() {
        out.push_str(&format!("rx,{i},{t:.17e}\n"));
    }
    for (j, t) in to.tau_tx.iter().enumerate() {
        out.push_str(&format!("tx,{j},{t:.17e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn zero_tau_max_gives_zero_offsets() {
        let to = draw_timing_offsets(4, 4, 0.0, 3).unwrap();
        assert!(to.stacked().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn offsets_are_reproducible_and_bounded() {
        let a = draw_timing_offsets(8, 8, 5.0, 11).unwrap();
        let b = draw_timing_offsets(8, 8, 5.0, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tau_rx[0], 0.0);
        assert!(a.stacked().iter().all(|&t| (0.0..=5.0).contains(&t)));
        // 200 ns at 40 ns per symbol.
        let tau_max = 200e-9 / 40e-9;
        assert!((tau_max - 5.0f64).abs() < 1e-12);
    }

    #[test]
    fn phn_variance_formula() {
        assert_eq!(phn_variance(0.0, 40e-9).unwrap(), 0.0);
        let v = phn_variance(1e4, 40e-9).unwrap();
        assert!((v - 2.0 * std::f64::consts::PI * 1e4 * 4e-8).abs() < 1e-15);
        assert!((v - 2.513e-3).abs() < 1e-6);
    }

    #[test]
    fn zero_steps_and_zero_variance_leave_state() {
        let s = PhaseNoiseState::random(2, 2, 1e-6, 5);
        assert_eq!(step_phase_noise(&s, 0, 1), s);
        let frozen = PhaseNoiseState { sigma2_per_sample: 0.0, ..s.clone() };
        let after = step_phase_noise(&frozen, 100, 1);
        assert_eq!(after.theta_rx, frozen.theta_rx);
        assert_eq!(after.sample_index, 100);
    }

    #[test]
    fn noise_variance_at_47_db() {
        assert!((noise_variance(47.0) - 1.995e-5).abs() < 1e-8);
    }

    #[test]
    fn awgn_zero_variance_is_identity() {
        let mut x = vec![Complex64::new(1.0, -2.0); 16];
        let orig = x.clone();
        add_awgn(&mut x, 0.0, &mut stream_rng(1, Stream::Noise)).unwrap();
        assert_eq!(x, orig);
    }

    #[test]
    fn increment_variance_over_many_trials() {
        let (trials, steps, sigma2) = (100_000u64, 100u64, 1e-6);
        let start = PhaseNoiseState { theta_tx: vec![0.0], theta_rx: vec![0.0], sigma2_per_sample: sigma2, sample_index: 0 };
        let mut sum2 = 0.0;
        for t in 0..trials {
            let end = step_phase_noise(&start, steps, t);
            sum2 += end.theta_rx[0].powi(2) + end.theta_tx[0].powi(2);
        }
        let var = sum2 / (2 * trials) as f64;
        assert!((var / 1e-4 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn awgn_variance_and_circularity() {
        let mut x = vec![Complex64::new(0.0, 0.0); 1_000_000];
        let sigma2 = noise_variance(47.0);
        add_awgn(&mut x, sigma2, &mut stream_rng(2, Stream::Noise)).unwrap();
        let n = x.len() as f64;
        let var = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let re = x.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        assert!((var / sigma2 - 1.0).abs() < 0.01);
        assert!((re / (sigma2 / 2.0) - 1.0).abs() < 0.01);
        assert!(add_awgn(&mut x, -1.0, &mut stream_rng(2, Stream::Noise)).is_err());
    }

    #[test]
    fn trajectory_increments_are_white() {
        let sigma2 = 1e-6;
        let traj = PhaseTrajectory::wiener(8, 20_001, sigma2, 4, 0).unwrap();
        let incs: Vec<Vec<f64>> = traj.phases.iter().map(|p| p.windows(2).map(|w| w[1] - w[0]).collect()).collect();
        let count = incs[0].len() as f64;
        for inc in &incs {
            let var = inc.iter().map(|d| d * d).sum::<f64>() / count;
            assert!((var / sigma2 - 1.0).abs() < 0.05, "{var}");
        }
        // Adjacent non-overlapping increments, pooled over antennas.
        let pairs = incs.iter().map(|inc| inc.len() - 1).sum::<usize>() as f64;
        let cov = incs.iter().flat_map(|inc| inc.windows(2).map(|w| w[0] * w[1])).sum::<f64>() / pairs;
        assert!(cov.abs() < 3.0 * sigma2 / pairs.sqrt(), "{cov}");
        assert!(traj.phases.iter().all(|p| (0.0..TAU).contains(&p[0])));
        let flat = PhaseTrajectory::wiener(2, 10, 0.0, 4, 0).unwrap();
        assert!(flat.phases.iter().all(|p| p.iter().all(|&v| v == p[0])));
    }

    #[test]
    fn sites_are_independent_and_reproducible() {
        let a = PhaseTrajectory::wiener(4, 50, 1e-6, 9, 0).unwrap();
        let b = PhaseTrajectory::wiener(4, 50, 1e-6, 9, 1).unwrap();
        assert_ne!(a.phases, b.phases);
        assert_eq!(a.phases, PhaseTrajectory::wiener(4, 50, 1e-6, 9, 0).unwrap().phases);
        assert_eq!(draw_site_offsets(8, 5.0, 9, 0).unwrap()[0], 0.0);
        assert_ne!(draw_site_offsets(8, 5.0, 9, 0).unwrap(), draw_site_offsets(8, 5.0, 9, 1).unwrap());
        assert!(draw_site_offsets(8, -1.0, 9, 0).is_err());
    }

    #[test]
    fn offsets_csv_lists_every_antenna() {
        let to = draw_timing_offsets(2, 3, 5.0, 1).unwrap();
        let csv = offsets_to_csv(&to);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().nth(1).unwrap().starts_with("rx,0,0.0"));
    }
}
