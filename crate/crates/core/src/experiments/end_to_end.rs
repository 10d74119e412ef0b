//! Monte-Carlo end-to-end comparison of the proposed chain and the baselines.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::link_sim::baselines::Method;
use crate::link_sim::metrics::{run_trial, summarize, MethodSummary, TrialReport};
use crate::link_sim::scenario::Scenario;
use crate::link_sim::setup::SequenceBank;
use crate::parallel::{map_indexed, Execution};
use crate::rng::trial_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndConfig {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for EndToEndConfig {
    fn default() -> Self {
        Self { scenario: Scenario::default(), methods: Method::ALL.to_vec(), trials: 20, seed: 7 }
    }
}

/// A trial that could not be completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndResult {
    pub reports: Vec<TrialReport>,
    pub failures: Vec<TrialFailure>,
    pub summary: Vec<MethodSummary>,
}

/// Runs all trials; a failing trial is recorded and excluded from the summary.
pub fn end_to_end(config: &EndToEndConfig, bank: &SequenceBank, exec: Execution) -> EndToEndResult {
    let outcomes = map_indexed(exec, config.trials, |t| {
        let seed = trial_seed(config.seed, t as u64);
        run_trial(&config.scenario, bank, t, seed, &config.methods).map_err(|e| TrialFailure { trial: t, seed, error: e.to_string() })
    });
    let mut reports = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(report) => reports.push(report),
            Err(failure) => {
                log::warn!("trial {} (seed {}) failed: {}", failure.trial, failure.seed, failure.error);
                failures.push(failure);
            }
        }
    }
    let summary = summarize(&reports, &config.methods);
    EndToEndResult { reports, failures, summary }
}

/// Validates the scenario, designs the sequences and runs [`end_to_end`].
pub fn run_end_to_end(config: &EndToEndConfig, exec: Execution) -> Result<EndToEndResult> {
    config.scenario.validate()?;
    let bank = SequenceBank::design(&config.scenario)?;
    Ok(end_to_end(config, &bank, exec))
}
