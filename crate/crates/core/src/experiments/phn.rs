//! Accuracy of pilot-based sum-phase estimation across XPD.
//!
//! Only pilots are sent (silence in between) on the uplink. The proposed
//! estimator runs in closed loop with ideal de-rotation at both ends; the
//! baselines extract per-link sum phases from raw pilots.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelTaps;
use crate::channel_est::{ls_estimate, stack_preamble};
use crate::error::Result;
use crate::linalg::{cis, CMat, ZERO};
use crate::link_sim::baselines::{extract_sum_phases, rotate_links, single_tap_estimate};
use crate::link_sim::engine::{add, columns, interior, phase_weights, set_matrix, TrialContext};
use crate::link_sim::scenario::Scenario;
use crate::link_sim::setup::{Direction, SequenceBank};
use crate::link_sim::synth::{PhaseView, SymbolSynth};
use crate::parallel::{map_indexed, Execution};
use crate::phase_tracking::{estimate_increment_weighted, pilot_system, sum_phases};
use crate::precoding::{optimize_stacked, stack_channel, DesignParams};
use crate::rng::trial_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseMethod {
    /// Linearized per-antenna LS on precoded pilots.
    Proposed,
    /// Single-tap LS sum-phase extraction.
    Baseline1,
    /// Multi-tap LS sum-phase extraction.
    Baseline2,
}

impl PhaseMethod {
    pub const ALL: [PhaseMethod; 3] = [PhaseMethod::Proposed, PhaseMethod::Baseline1, PhaseMethod::Baseline2];

    pub fn name(self) -> &'static str {
        match self {
            PhaseMethod::Proposed => "proposed",
            PhaseMethod::Baseline1 => "baseline1",
            PhaseMethod::Baseline2 => "baseline2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSweepConfig {
    pub scenario: Scenario,
    pub xpd_grid_db: Vec<f64>,
    pub trials: usize,
    /// Pilots evaluated per trial.
    pub pilots: usize,
    /// Freeze phase noise over the preamble at the reference symbol, so the
    /// channel estimate absorbs it exactly.
    pub ideal_preamble: bool,
    pub seed: u64,
}

impl Default for PhaseSweepConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            xpd_grid_db: (0..=6).map(|k| 5.0 * k as f64).collect(),
            trials: 50,
            pilots: 20,
            ideal_preamble: true,
            seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub xpd_db: f64,
    pub method: PhaseMethod,
    /// RMSE of the accumulated sum-phase estimate over links, pilots and trials (rad).
    pub rmse: f64,
}

/// Sum of squared sum-phase errors and their count.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorTally {
    pub squared: f64,
    pub count: usize,
}

impl ErrorTally {
    fn add(&mut self, estimate: &[f64], truth: &[f64]) {
        for (e, t) in estimate.iter().zip(truth) {
            self.squared += (e - t).powi(2);
            self.count += 1;
        }
    }

    fn merge(self, other: Self) -> Self {
        Self { squared: self.squared + other.squared, count: self.count + other.count }
    }

    pub fn rmse(&self) -> f64 {
        (self.squared / self.count.max(1) as f64).sqrt()
    }
}

struct Reference {
    estimate: ChannelTaps,
    single_tap: CMat,
    sums: Vec<f64>,
}

fn frame_sums(ctx: &TrialContext, dir: Direction, range: std::ops::Range<usize>) -> Vec<f64> {
    let (rx, tx) = ctx.real.phases(dir);
    let offset = ctx.real.frame_offset;
    let rx = rx.mean_over(offset + range.start..offset + range.end);
    let tx = tx.mean_over(offset + range.start..offset + range.end);
    rx.iter().flat_map(|r| tx.iter().map(move |t| r + t)).collect()
}

fn preamble_reference(ctx: &TrialContext, config: &PhaseSweepConfig, bank: &SequenceBank, dir: Direction) -> Result<Reference> {
    let inputs = &ctx.inputs[dir.index()];
    if !config.ideal_preamble {
        let sums = frame_sums(ctx, dir, 0..config.scenario.frame.l_t);
        return Ok(Reference { estimate: inputs.estimate.clone(), single_tap: inputs.pilot_reference.clone(), sums });
    }
    let k_ref = inputs.reference_symbol;
    let sums = frame_sums(ctx, dir, k_ref..k_ref + 1);
    let frozen = rotate_links(&inputs.truth, &sums);
    let synth = SymbolSynth { taps: &frozen, phases: None, sigma2: 0.0 };
    let preamble = columns(&bank.preamble);
    let noise = &ctx.real.noise[dir.index()];
    let rx: Vec<Vec<Complex64>> = (0..preamble.len()).map(|k| add(&synth.noiseless_at(&preamble, k), &noise[k])).collect();
    let y = CMat::from_fn(frozen.n_rx(), rx.len(), |i, k| rx[k][i]);
    let w = config.scenario.window_w;
    let estimate = ls_estimate(&y, &stack_preamble(&bank.preamble, w)?)?;
    let l_p = bank.pilots.len();
    let u = set_matrix(&bank.preamble);
    let single_tap = single_tap_estimate(&interior(&y.columns(0, l_p).into_owned(), w), &interior(&u.columns(0, l_p).into_owned(), w))?;
    Ok(Reference { estimate, single_tap, sums })
}

/// Error tallies of one trial, ordered as [`PhaseMethod::ALL`].
pub fn phase_trial(config: &PhaseSweepConfig, scenario: &Scenario, bank: &SequenceBank, seed: u64) -> Result<[ErrorTally; 3]> {
    let ctx = TrialContext::prepare(scenario, bank, seed)?;
    let dir = Direction::Uplink;
    let reference = preamble_reference(&ctx, config, bank, dir)?;
    let truth_taps = &ctx.inputs[dir.index()].truth;
    let n = scenario.antennas;
    let w = scenario.window_w;
    let params = DesignParams {
        sigma2: scenario.sigma2(),
        power: scenario.power(),
        cap_bits: scenario.max_qam.trailing_zeros() as f64,
        memory: scenario.memory_d,
        max_iters: scenario.ao_max_iters,
        tol: scenario.ao_tol,
    };
    let design = optimize_stacked(&stack_channel(&reference.estimate, scenario.memory_d), &params)?;
    let l_p = bank.pilots.len();
    let u = CMat::from_fn(n, l_p, |j, k| bank.pilots.sequences[j][k]);
    let precoded = &design.precoder * &u;
    let system = pilot_system(scenario.pilot_model, &design, &reference.estimate, &precoded);
    let weights = phase_weights(scenario, &design);
    let d = design.memory as isize;
    let w_adj: Vec<CMat> = (-d..=d).map(|k| design.decorrelator_tap(k).adjoint()).collect();
    let pilot_stack = stack_preamble(&bank.pilots, w)?;
    let interior_u = interior(&u, w);
    let (rx_traj, tx_traj) = ctx.real.phases(dir);
    let pad = design.memory + w;
    let window = l_p + 2 * pad;
    let noise = &ctx.real.noise[dir.index()];
    let mut phi = vec![0.0; 2 * n];
    let mut single = vec![0.0; n * n];
    let mut multi = vec![0.0; n * n];
    let mut tallies = [ErrorTally::default(); 3];
    for q in 1..=config.pilots.min(scenario.frame.n_sf.saturating_sub(1)) {
        let start = scenario.frame.pilot_start(q);
        let view = PhaseView { rx: rx_traj, tx: tx_traj, start: ctx.real.frame_offset + start - pad };
        let synth = SymbolSynth { taps: truth_taps, phases: Some(view), sigma2: 0.0 };
        let receive = |tx: &[Vec<Complex64>]| -> Vec<Vec<Complex64>> { (0..window).map(|k| add(&synth.noiseless_at(tx, k), &noise[start - pad + k])).collect() };
        let frame = |symbol: &dyn Fn(usize) -> Vec<Complex64>| -> Vec<Vec<Complex64>> {
            (0..window).map(|k| if (pad..pad + l_p).contains(&k) { symbol(k - pad) } else { vec![ZERO; n] }).collect()
        };

        let tx_rot: Vec<Complex64> = phi[n..].iter().map(|p| cis(-p)).collect();
        let y = receive(&frame(&|c| (0..n).map(|j| precoded[(j, c)] * tx_rot[j]).collect()));
        let rx_rot: Vec<Complex64> = phi[..n].iter().map(|p| cis(-p)).collect();
        let r = CMat::from_fn(design.streams(), l_p, |s, c| {
            w_adj
                .iter()
                .enumerate()
                .map(|(b, wa)| {
                    let yk = &y[(pad + c) - b + d as usize];
                    (0..n).map(|i| wa[(s, i)] * yk[i] * rx_rot[i]).sum::<Complex64>()
                })
                .sum()
        });
        let increment = estimate_increment_weighted(&system, &r, &weights)?;
        phi.iter_mut().zip(&increment.delta).for_each(|(p, d)| *p += d);

        let y = receive(&frame(&|c| u.column(c).iter().copied().collect()));
        let y_pilot = CMat::from_fn(n, l_p, |i, c| y[pad + c][i]);
        let h_single = single_tap_estimate(&interior(&y_pilot, w), &interior_u)?;
        single = extract_sum_phases(&h_single, &reference.single_tap, &single);
        let h_multi = ls_estimate(&y_pilot, &pilot_stack)?;
        multi = extract_sum_phases(h_multi.principal(), reference.estimate.principal(), &multi);

        let truth: Vec<f64> = frame_sums(&ctx, dir, start..start + l_p).iter().zip(&reference.sums).map(|(a, b)| a - b).collect();
        tallies[0].add(&sum_phases(&phi, n), &truth);
        tallies[1].add(&single, &truth);
        tallies[2].add(&multi, &truth);
    }
    Ok(tallies)
}

pub fn phase_sweep(config: &PhaseSweepConfig, bank: &SequenceBank, exec: Execution) -> Result<Vec<PhaseRow>> {
    let mut rows = Vec::new();
    for (g, &xpd) in config.xpd_grid_db.iter().enumerate() {
        let scenario = Scenario { xpd_db: xpd, ..config.scenario.clone() };
        let per_trial = map_indexed(exec, config.trials, |t| phase_trial(config, &scenario, bank, trial_seed(config.seed, (g * config.trials + t) as u64)));
        let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
        for (k, method) in PhaseMethod::ALL.iter().enumerate() {
            let total = per_trial.iter().fold(ErrorTally::default(), |acc, t| acc.merge(t[k]));
            rows.push(PhaseRow { xpd_db: xpd, method: *method, rmse: total.rmse() });
        }
    }
    Ok(rows)
}
