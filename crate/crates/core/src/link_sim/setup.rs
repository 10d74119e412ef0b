//! One trial's physical realization, shared by every method.
//!
//! Site A transmits on the uplink and site B on the downlink. Each site has
//! one set of timing offsets and one oscillator per antenna, used for both
//! of its roles.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_polarization, build_los_channel, discretize_taps, extend_rummler, ArrayGeometry, ChannelTaps, TwoPathChannel};
use crate::error::Result;
use crate::impairments::{complex_gaussian, draw_site_offsets, PhaseTrajectory};
use crate::link_sim::scenario::Scenario;
use crate::link_sim::synth::{synthesize_samples, PhaseView};
use crate::rng::{stream_rng_indexed, Stream};
use crate::sequences::{design_preamble, DesignOptions, SequenceSet};
use crate::timing_sync::{estimate_sum_offsets, required_samples, solve_per_antenna, sum_offset_rmse, AntennaOffsets};

/// Link direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Site A transmits, site B receives.
    Uplink,
    /// Site B transmits, site A receives.
    Downlink,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Uplink, Direction::Downlink];

    pub fn index(self) -> usize {
        match self {
            Direction::Uplink => 0,
            Direction::Downlink => 1,
        }
    }
}

/// Sequences shared by all trials of an experiment.
#[derive(Debug, Clone)]
pub struct SequenceBank {
    pub preamble: SequenceSet,
    pub pilots: SequenceSet,
}

impl SequenceBank {
    pub fn design(scenario: &Scenario) -> Result<Self> {
        let preamble = design_preamble(
            scenario.antennas,
            scenario.frame.l_t,
            scenario.tau_max,
            DesignOptions::default(),
            scenario.sequence_seed,
        )?;
        let pilots = preamble.truncated(scenario.frame.l_p.min(scenario.frame.l_t))?;
        Ok(Self { preamble, pilots })
    }
}

/// Symbols reserved for the initial (timing) frame before the data frame.
pub fn timing_frame_len(scenario: &Scenario) -> usize {
    scenario.frame.l_t + (2.0 * scenario.tau_max + 2.0 * scenario.pulse_span).ceil() as usize + 1
}

/// Everything random about one trial.
#[derive(Debug, Clone)]
pub struct Realization {
    pub seed: u64,
    /// Uplink and downlink two-path channels.
    pub channels: [TwoPathChannel; 2],
    pub tau_a: Vec<f64>,
    pub tau_b: Vec<f64>,
    pub phase_a: PhaseTrajectory,
    pub phase_b: PhaseTrajectory,
    /// Index of the data frame's first symbol in the phase trajectories.
    pub frame_offset: usize,
    /// Symbol-rate receiver noise of the data frame, `[direction][k][antenna]`.
    pub noise: [Vec<Vec<Complex64>>; 2],
}

impl Realization {
    pub fn draw(scenario: &Scenario, seed: u64) -> Result<Self> {
        let n = scenario.antennas;
        let wavelength = scenario.wavelength();
        let geometry = ArrayGeometry::flat_panel(n, n, scenario.spacing_wavelengths * wavelength, scenario.distance_m, wavelength)?;
        let ul_los = apply_polarization(&build_los_channel(&geometry)?, scenario.xpd_db)?;
        let dl_los = apply_polarization(&build_los_channel(&geometry.reversed())?, scenario.xpd_db)?;
        let params = scenario.rummler();
        let channels = [extend_rummler(&ul_los, &params, seed, 0)?, extend_rummler(&dl_los, &params, seed, 1)?];
        let tau_a = draw_site_offsets(n, scenario.tau_max, seed, 0)?;
        let tau_b = draw_site_offsets(n, scenario.tau_max, seed, 1)?;
        let frame_offset = timing_frame_len(scenario);
        let len = frame_offset + scenario.frame.total_symbols() + 1;
        let phase_a = PhaseTrajectory::wiener(n, len, scenario.sigma_delta2, seed, 0)?;
        let phase_b = PhaseTrajectory::wiener(n, len, scenario.sigma_delta2, seed, 1)?;
        let sigma2 = scenario.sigma2();
        let total = scenario.frame.total_symbols();
        let noise = [0u64, 1].map(|d| {
            let mut rng = stream_rng_indexed(seed, Stream::Noise, 100 + d);
            (0..total).map(|_| (0..n).map(|_| complex_gaussian(&mut rng, sigma2)).collect()).collect()
        });
        Ok(Self { seed, channels, tau_a, tau_b, phase_a, phase_b, frame_offset, noise })
    }

    pub fn channel(&self, dir: Direction) -> &TwoPathChannel {
        &self.channels[dir.index()]
    }

    /// `(receiver offsets, transmitter offsets)` of a direction.
    pub fn offsets(&self, dir: Direction) -> (&[f64], &[f64]) {
        match dir {
            Direction::Uplink => (&self.tau_b, &self.tau_a),
            Direction::Downlink => (&self.tau_a, &self.tau_b),
        }
    }

    /// `(receiver phases, transmitter phases)` of a direction.
    pub fn phases(&self, dir: Direction) -> (&PhaseTrajectory, &PhaseTrajectory) {
        match dir {
            Direction::Uplink => (&self.phase_b, &self.phase_a),
            Direction::Downlink => (&self.phase_a, &self.phase_b),
        }
    }

    /// Phase view of the data frame of a direction.
    pub fn frame_phases(&self, dir: Direction) -> PhaseView<'_> {
        let (rx, tx) = self.phases(dir);
        PhaseView { rx, tx, start: self.frame_offset }
    }
}

/// Sum offsets `τ_rx[i] + τ_tx[j]`, row-major in `i`.
pub fn link_offsets(rx: &[f64], tx: &[f64]) -> Vec<f64> {
    rx.iter().flat_map(|r| tx.iter().map(move |t| r + t)).collect()
}

/// Receives a preamble of the initial frame at `Q` samples per symbol.
pub fn receive_timing_preamble(scenario: &Scenario, real: &Realization, dir: Direction, set: &SequenceSet) -> Result<Vec<Vec<Complex64>>> {
    let (rx_to, tx_to) = real.offsets(dir);
    let (rx_ph, tx_ph) = real.phases(dir);
    let pulse = scenario.pulse();
    let q = pulse.oversampling;
    let n_samples = required_samples(set.len(), scenario.tau_max, q);
    let mut samples = synthesize_samples(
        real.channel(dir),
        &pulse,
        &link_offsets(rx_to, tx_to),
        &set.sequences,
        n_samples,
        Some(PhaseView { rx: rx_ph, tx: tx_ph, start: 0 }),
    )?;
    let sigma2 = scenario.sigma2();
    let mut rng = stream_rng_indexed(real.seed, Stream::Noise, 10 + dir.index() as u64);
    for row in samples.iter_mut() {
        for s in row.iter_mut() {
            *s += complex_gaussian(&mut rng, sigma2);
        }
    }
    Ok(samples)
}

/// Timing estimates of both sites, each from its own receiver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingOutcome {
    /// Uplink estimate (computed at B).
    pub uplink: AntennaOffsets,
    /// Downlink estimate (computed at A).
    pub downlink: AntennaOffsets,
    /// Sum-offset RMSE of the LS reconstruction, per direction.
    pub rmse: [f64; 2],
    /// Largest absolute residual offset of any link after compensation.
    pub max_residual: f64,
}

impl TimingOutcome {
    /// Site A keeps its own part of the downlink estimate, B its own part of the uplink one.
    pub fn local_estimates(&self) -> (&[f64], &[f64]) {
        (&self.downlink.tau_rx, &self.uplink.tau_rx)
    }

    /// Offsets remaining on each link of `dir` after both sites compensate.
    pub fn residual_offsets(&self, real: &Realization, dir: Direction) -> (Vec<f64>, Vec<f64>) {
        let (hat_a, hat_b) = self.local_estimates();
        let res_a: Vec<f64> = real.tau_a.iter().zip(hat_a).map(|(t, h)| t - h).collect();
        let res_b: Vec<f64> = real.tau_b.iter().zip(hat_b).map(|(t, h)| t - h).collect();
        match dir {
            Direction::Uplink => (res_b, res_a),
            Direction::Downlink => (res_a, res_b),
        }
    }
}

/// Initial-frame synchronization in both directions with the designed preamble.
pub fn synchronize(scenario: &Scenario, real: &Realization, set: &SequenceSet) -> Result<TimingOutcome> {
    let q = scenario.oversampling_q;
    let mut est = Vec::with_capacity(2);
    let mut rmse = [0.0; 2];
    for dir in Direction::BOTH {
        let samples = receive_timing_preamble(scenario, real, dir, set)?;
        let gamma = estimate_sum_offsets(&samples, set, scenario.tau_max, q)?;
        let tau = solve_per_antenna(&gamma)?;
        let (rx, tx) = real.offsets(dir);
        rmse[dir.index()] = sum_offset_rmse(&tau.sum_offsets(), &link_offsets(rx, tx), rx.len());
        est.push(tau);
    }
    let downlink = est.pop().expect("two directions");
    let uplink = est.pop().expect("two directions");
    let mut out = TimingOutcome { uplink, downlink, rmse, max_residual: 0.0 };
    out.max_residual = Direction::BOTH
        .iter()
        .flat_map(|&d| {
            let (r, t) = out.residual_offsets(real, d);
            link_offsets(&r, &t)
        })
        .fold(0.0, |m, v| m.max(v.abs()));
    Ok(out)
}

/// Symbol-spaced truth taps of a direction after timing compensation.
pub fn compensated_taps(scenario: &Scenario, real: &Realization, timing: &TimingOutcome, dir: Direction) -> Result<ChannelTaps> {
    let (rx_res, tx_res) = timing.residual_offsets(real, dir);
    discretize_taps(real.channel(dir), &scenario.pulse(), &tx_res, &rx_res, scenario.window_w)
}
