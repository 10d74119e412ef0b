//! Sum rate of the optimized transceiver against SVD over residual timing
//! error and phase-noise strength.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_polarization, build_los_channel, discretize_taps, extend_rummler, ArrayGeometry};
use crate::channel_est::{ls_estimate, stack_preamble, to_matrix};
use crate::error::Result;
use crate::impairments::{complex_gaussian, PhaseTrajectory};
use crate::link_sim::scenario::Scenario;
use crate::link_sim::setup::SequenceBank;
use crate::link_sim::synth::{PhaseView, SymbolSynth};
use crate::parallel::{map_indexed, Execution};
use crate::precoding::{optimize_stacked, stack_channel, sum_rate, svd_baseline, DesignParams};
use crate::rng::{stream_rng, stream_rng_indexed, trial_seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecoderGridConfig {
    pub scenario: Scenario,
    /// Largest residual timing offset per antenna, in symbols.
    pub tau_grid: Vec<f64>,
    /// Per-symbol phase-noise standard deviation (rad).
    pub sigma_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// `count` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    (0..count).map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64)).collect()
}

impl Default for PrecoderGridConfig {
    fn default() -> Self {
        let grid = log_grid(1e-3, 1e-1, 5);
        Self { scenario: Scenario::default(), tau_grid: grid.clone(), sigma_grid: grid, trials: 10, seed: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecoderGridRow {
    pub tau_max: f64,
    pub sigma_delta: f64,
    pub proposed_rate: f64,
    pub svd_rate: f64,
}

fn grid_trial(scenario: &Scenario, bank: &SequenceBank, tau: f64, sigma: f64, seed: u64) -> Result<(f64, f64)> {
    let n = scenario.antennas;
    let wavelength = scenario.wavelength();
    let geometry = ArrayGeometry::flat_panel(n, n, scenario.spacing_wavelengths * wavelength, scenario.distance_m, wavelength)?;
    let los = apply_polarization(&build_los_channel(&geometry)?, scenario.xpd_db)?;
    let channel = extend_rummler(&los, &scenario.rummler(), seed, 0)?;
    let mut rng = stream_rng(seed, Stream::Timing);
    let rx_to: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=tau)).collect();
    let tx_to: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=tau)).collect();
    let truth = discretize_taps(&channel, &scenario.pulse(), &tx_to, &rx_to, scenario.window_w)?;
    let len = bank.preamble.len();
    let rx_ph = PhaseTrajectory::wiener(n, len, sigma * sigma, seed, 1)?;
    let tx_ph = PhaseTrajectory::wiener(n, len, sigma * sigma, seed, 0)?;
    let synth = SymbolSynth { taps: &truth, phases: Some(PhaseView { rx: &rx_ph, tx: &tx_ph, start: 0 }), sigma2: scenario.sigma2() };
    let tx: Vec<Vec<_>> = (0..len).map(|k| bank.preamble.sequences.iter().map(|s| s[k]).collect()).collect();
    let mut noise_rng = stream_rng_indexed(seed, Stream::Noise, 0);
    let rx: Vec<Vec<_>> = (0..len)
        .map(|k| synth.noiseless_at(&tx, k).into_iter().map(|v| v + complex_gaussian(&mut noise_rng, scenario.sigma2())).collect())
        .collect();
    let estimate = ls_estimate(&to_matrix(&rx), &stack_preamble(&bank.preamble, scenario.window_w)?)?;
    let stacked = stack_channel(&estimate, scenario.memory_d);
    let cap = scenario.max_qam.trailing_zeros() as f64;
    let params = DesignParams { sigma2: scenario.sigma2(), power: scenario.power(), cap_bits: cap, memory: scenario.memory_d, max_iters: scenario.ao_max_iters, tol: scenario.ao_tol };
    let proposed = optimize_stacked(&stacked, &params)?;
    let svd = svd_baseline(&estimate, scenario.power(), scenario.memory_d, cap)?;
    Ok((sum_rate(&proposed, &stacked, scenario.sigma2()), sum_rate(&svd, &stacked, scenario.sigma2())))
}

pub fn precoder_grid(config: &PrecoderGridConfig, bank: &SequenceBank, exec: Execution) -> Result<Vec<PrecoderGridRow>> {
    let points: Vec<(f64, f64)> = config.tau_grid.iter().flat_map(|&t| config.sigma_grid.iter().map(move |&s| (t, s))).collect();
    let trials = config.trials.max(1);
    let results = map_indexed(exec, points.len() * trials, |idx| {
        let (t, s) = points[idx / trials];
        grid_trial(&config.scenario, bank, t, s, trial_seed(config.seed, idx as u64))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(p, &(tau_max, sigma_delta))| {
            let chunk = &results[p * trials..(p + 1) * trials];
            PrecoderGridRow {
                tau_max,
                sigma_delta,
                proposed_rate: chunk.iter().map(|r| r.0).sum::<f64>() / trials as f64,
                svd_rate: chunk.iter().map(|r| r.1).sum::<f64>() / trials as f64,
            }
        })
        .collect())
}
