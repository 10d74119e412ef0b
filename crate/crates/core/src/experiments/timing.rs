//! Sum-offset accuracy of initial synchronization across XPD.

use serde::{Deserialize, Serialize};

use crate::channel::{apply_polarization, build_los_channel, extend_rummler, ArrayGeometry};
use crate::error::Result;
use crate::impairments::{complex_gaussian, draw_timing_offsets, PhaseTrajectory};
use crate::link_sim::scenario::Scenario;
use crate::link_sim::setup::{link_offsets, SequenceBank};
use crate::link_sim::synth::{synthesize_samples, PhaseView};
use crate::parallel::{map_indexed, Execution};
use crate::rng::{stream_rng_indexed, trial_seed, Stream};
use crate::sequences::{walsh_set, zc_set, SequenceSet};
use crate::timing_sync::{estimate_sum_offsets, required_samples, solve_per_antenna, sum_offset_rmse};

/// Preamble family and estimator compared in the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimingMethod {
    DesignedLs,
    DesignedPeak,
    ZadoffChuLs,
    WalshLs,
}

impl TimingMethod {
    pub const ALL: [TimingMethod; 4] = [TimingMethod::DesignedLs, TimingMethod::DesignedPeak, TimingMethod::ZadoffChuLs, TimingMethod::WalshLs];

    pub fn name(self) -> &'static str {
        match self {
            TimingMethod::DesignedLs => "designed+ls",
            TimingMethod::DesignedPeak => "designed",
            TimingMethod::ZadoffChuLs => "zc+ls",
            TimingMethod::WalshLs => "walsh+ls",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSweepConfig {
    pub scenario: Scenario,
    pub xpd_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for TimingSweepConfig {
    fn default() -> Self {
        Self { scenario: Scenario::default(), xpd_grid_db: (0..=6).map(|k| 5.0 * k as f64).collect(), trials: 100, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub xpd_db: f64,
    pub method: TimingMethod,
    /// `sqrt(E[‖γ̂ - γ‖² / N²])` over trials.
    pub rmse: f64,
}

/// Squared normalized sum-offset errors of every method for one trial.
fn timing_trial(scenario: &Scenario, sets: &[(TimingMethod, &SequenceSet)], seed: u64) -> Result<Vec<f64>> {
    let n = scenario.antennas;
    let wavelength = scenario.wavelength();
    let geometry = ArrayGeometry::flat_panel(n, n, scenario.spacing_wavelengths * wavelength, scenario.distance_m, wavelength)?;
    let los = apply_polarization(&build_los_channel(&geometry)?, scenario.xpd_db)?;
    let channel = extend_rummler(&los, &scenario.rummler(), seed, 0)?;
    let offsets = draw_timing_offsets(n, n, scenario.tau_max, seed)?;
    let truth = link_offsets(&offsets.tau_rx, &offsets.tau_tx);
    let len = scenario.frame.l_t + 1;
    let rx_phase = PhaseTrajectory::wiener(n, len, scenario.sigma_delta2, seed, 1)?;
    let tx_phase = PhaseTrajectory::wiener(n, len, scenario.sigma_delta2, seed, 0)?;
    let pulse = scenario.pulse();
    let q = pulse.oversampling;
    let n_samples = required_samples(scenario.frame.l_t, scenario.tau_max, q);
    let sigma2 = scenario.sigma2();
    let mut rng = stream_rng_indexed(seed, Stream::Noise, 10);
    let noise: Vec<Vec<_>> = (0..n).map(|_| (0..n_samples).map(|_| complex_gaussian(&mut rng, sigma2)).collect()).collect();
    sets.iter()
        .map(|(method, set)| {
            let mut samples = synthesize_samples(&channel, &pulse, &truth, &set.sequences, n_samples, Some(PhaseView { rx: &rx_phase, tx: &tx_phase, start: 0 }))?;
            for (row, v) in samples.iter_mut().zip(&noise) {
                row.iter_mut().zip(v).for_each(|(s, w)| *s += w);
            }
            let gamma = estimate_sum_offsets(&samples, set, scenario.tau_max, q)?;
            let estimate = match method {
                TimingMethod::DesignedPeak => gamma.gamma.clone(),
                _ => solve_per_antenna(&gamma)?.sum_offsets(),
            };
            Ok(sum_offset_rmse(&estimate, &truth, n).powi(2))
        })
        .collect()
}

pub fn timing_sweep(config: &TimingSweepConfig, bank: &SequenceBank, exec: Execution) -> Result<Vec<TimingRow>> {
    let s = &config.scenario;
    let zc = zc_set(s.antennas, s.frame.l_t)?;
    let walsh = walsh_set(s.antennas, s.frame.l_t)?;
    let sets = [
        (TimingMethod::DesignedLs, &bank.preamble),
        (TimingMethod::DesignedPeak, &bank.preamble),
        (TimingMethod::ZadoffChuLs, &zc),
        (TimingMethod::WalshLs, &walsh),
    ];
    let mut rows = Vec::new();
    for (g, &xpd) in config.xpd_grid_db.iter().enumerate() {
        let scenario = Scenario { xpd_db: xpd, ..s.clone() };
        let per_trial = map_indexed(exec, config.trials, |t| timing_trial(&scenario, &sets, trial_seed(config.seed, (g * config.trials + t) as u64)));
        let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
        for (k, (method, _)) in sets.iter().enumerate() {
            let mean = per_trial.iter().map(|v| v[k]).sum::<f64>() / config.trials.max(1) as f64;
            rows.push(TimingRow { xpd_db: xpd, method: *method, rmse: mean.sqrt() });
        }
    }
    Ok(rows)
}
