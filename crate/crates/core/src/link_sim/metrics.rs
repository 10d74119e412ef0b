//! Per-trial reports and their aggregation.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::rel_error;
use crate::link_sim::baselines::Method;
use crate::link_sim::engine::{simulate_method, MethodOutcome, TrialContext};
use crate::link_sim::scenario::Scenario;
use crate::link_sim::setup::{Direction, SequenceBank};

/// Everything measured in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    /// Uplink and downlink sum-offset RMSE of the initial synchronization.
    pub timing_rmse: [f64; 2],
    /// Relative error of the multi-tap estimate against the phase-referenced truth.
    pub channel_estimation_error: [f64; 2],
    pub methods: Vec<MethodOutcome>,
}

impl TrialReport {
    pub fn method(&self, method: Method) -> Option<&MethodOutcome> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Runs all `methods` on one realization.
pub fn run_trial(scenario: &Scenario, bank: &SequenceBank, trial: usize, seed: u64, methods: &[Method]) -> Result<TrialReport> {
    let ctx = TrialContext::prepare(scenario, bank, seed)?;
    let channel_estimation_error = Direction::BOTH.map(|dir| {
        let inputs = &ctx.inputs[dir.index()];
        let (rx, tx) = ctx.real.phases(dir);
        let k = ctx.real.frame_offset + inputs.reference_symbol;
        let truth = inputs.truth.rotated(&rx.at(k), &tx.at(k));
        rel_error(&inputs.estimate.aggregate(), &truth.aggregate())
    });
    let methods = methods.iter().map(|&m| simulate_method(&ctx, m)).collect::<Result<Vec<_>>>()?;
    Ok(TrialReport { trial, seed, timing_rmse: ctx.timing.rmse, channel_estimation_error, methods })
}

/// Averages of one method over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub trials: usize,
    pub ber: f64,
    pub spectral_efficiency: f64,
    pub mean_sinr_db: Vec<f64>,
    pub residual_phase_rmse: f64,
}

/// Table-style summary: BER pooled over all data bits, SE and SINR averaged over trials.
pub fn summarize(reports: &[TrialReport], methods: &[Method]) -> Vec<MethodSummary> {
    methods
        .iter()
        .map(|&method| {
            let outcomes: Vec<&MethodOutcome> = reports.iter().filter_map(|r| r.method(method)).collect();
            let t = outcomes.len().max(1) as f64;
            let (errors, bits) = outcomes
                .iter()
                .flat_map(|o| &o.directions)
                .fold((0u64, 0u64), |(e, b), d| (e + d.bit_errors, b + d.bits));
            let ns = outcomes.first().map(|o| o.mean_sinr_db().len()).unwrap_or(0);
            let mut mean_sinr_db = vec![0.0; ns];
            for o in &outcomes {
                for (acc, v) in mean_sinr_db.iter_mut().zip(o.mean_sinr_db()) {
                    *acc += v / t;
                }
            }
            MethodSummary {
                method,
                trials: outcomes.len(),
                ber: if bits == 0 { 0.0 } else { errors as f64 / bits as f64 },
                spectral_efficiency: outcomes.iter().map(|o| o.spectral_efficiency()).sum::<f64>() / t,
                mean_sinr_db,
                residual_phase_rmse: (outcomes.iter().map(|o| o.residual_phase_rmse().powi(2)).sum::<f64>() / t).sqrt(),
            }
        })
        .collect()
}
