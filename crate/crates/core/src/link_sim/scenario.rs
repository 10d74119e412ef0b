//! Physical and algorithm parameters of a simulated link.

use serde::{Deserialize, Serialize};

use crate::channel::{carrier_wavelength, PulseShape, RummlerParams};
use crate::error::{Error, Result};
use crate::impairments::noise_variance;
use crate::link_sim::frame::FrameConfig;
use crate::phase_tracking::{CommonPhaseSide, PilotModel};

/// How per-stream modulation levels are chosen before data transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ModulationPolicy {
    /// From the SINR predicted by the design on the estimated channel.
    #[default]
    Predicted,
    /// From a probe pass that measures the SINR over the first subframes.
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub carrier_hz: f64,
    /// Antennas per site (`N = M`).
    pub antennas: usize,
    /// Element spacing in wavelengths.
    pub spacing_wavelengths: f64,
    pub distance_m: f64,
    pub xpd_db: f64,
    pub rho_db: f64,
    pub interpath_delay_s: f64,
    pub tau_max: f64,
    pub sigma_delta2: f64,
    pub alpha: f64,
    pub frame: FrameConfig,
    pub window_w: usize,
    pub memory_d: usize,
    pub oversampling_q: usize,
    pub rolloff: f64,
    pub pulse_span: f64,
    pub n_blocks: usize,
    pub max_qam: u32,
    pub target_ser: f64,
    pub ao_max_iters: usize,
    pub ao_tol: f64,
    pub genie_feedback: bool,
    pub decision_feedback: bool,
    /// Re-apply the receive correction updated from a data block to that same block.
    pub refresh_receive: bool,
    pub common_phase_side: CommonPhaseSide,
    /// Signal model of the per-antenna phase LS (pilots and decision feedback).
    pub pilot_model: PilotModel,
    /// Weight each stream's rows of the phase LS by its inverse filtered-noise level.
    pub whiten_phase_ls: bool,
    pub modulation_policy: ModulationPolicy,
    /// Subframes used by the measured-modulation probe.
    pub probe_subframes: usize,
    pub sequence_seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            carrier_hz: 23e9,
            antennas: 8,
            spacing_wavelengths: 0.5,
            distance_m: 3000.0,
            xpd_db: 20.0,
            rho_db: 10.0,
            interpath_delay_s: 6.3e-9,
            tau_max: 5.0,
            sigma_delta2: 1e-6,
            alpha: 0.1,
            frame: FrameConfig::default(),
            window_w: 3,
            memory_d: 3,
            oversampling_q: 8,
            rolloff: 0.25,
            pulse_span: 8.0,
            n_blocks: 10,
            max_qam: 4096,
            target_ser: 1e-3,
            ao_max_iters: 200,
            ao_tol: 1e-6,
            genie_feedback: true,
            decision_feedback: true,
            refresh_receive: false,
            common_phase_side: CommonPhaseSide::Receive,
            pilot_model: PilotModel::Convolved,
            whiten_phase_ls: true,
            modulation_policy: ModulationPolicy::Predicted,
            probe_subframes: 10,
            sequence_seed: 2024,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        if self.antennas == 0 || self.antennas % 2 != 0 {
            return Err(Error::InvalidParameter(format!("antenna count {} must be even", self.antennas)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.sigma_delta2 >= 0.0) || !(self.tau_max >= 0.0) {
            return Err(Error::InvalidParameter("phase-noise variance and tau_max must be nonnegative".into()));
        }
        if self.oversampling_q == 0 || self.n_blocks == 0 {
            return Err(Error::InvalidParameter("oversampling and block count must be positive".into()));
        }
        if self.frame.l_t <= 2 * self.window_w + 1 {
            return Err(Error::InvalidParameter("preamble too short for the tap window".into()));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        carrier_wavelength(self.carrier_hz)
    }

    pub fn sigma2(&self) -> f64 {
        noise_variance(self.frame.snr_db)
    }

    /// Total transmit power: unit power per antenna.
    pub fn power(&self) -> f64 {
        self.antennas as f64
    }

    pub fn rummler(&self) -> RummlerParams {
        RummlerParams {
            notch_depth_db: self.rho_db,
            interpath_delay: self.interpath_delay_s,
            notch_frequency: 0.0,
            symbol_time: self.frame.symbol_time,
        }
    }

    pub fn pulse(&self) -> PulseShape {
        PulseShape { rolloff: self.rolloff, span: self.pulse_span, oversampling: self.oversampling_q }
    }
}
