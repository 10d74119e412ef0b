//! Preamble design with an isolation comparison against classical families.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sequences::{design_preamble, isolation_report_window, lag_window, walsh_set, zc_set, DesignOptions, IsolationReport, SequenceSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqDesignConfig {
    pub antennas: usize,
    pub length: usize,
    /// Maximum timing offset in symbols; the lag window is `⌈2τ_max⌉`.
    pub tau_max: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for SeqDesignConfig {
    fn default() -> Self {
        Self { antennas: 8, length: 256, tau_max: 5.0, max_iters: DesignOptions::default().max_iters, seed: 2024 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyIsolation {
    pub family: String,
    pub report: IsolationReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeqDesignResult {
    pub designed: SequenceSet,
    /// Designed set first, then Zadoff-Chu and Walsh over the same lag window.
    pub isolation: Vec<FamilyIsolation>,
}

impl SeqDesignResult {
    /// Worst-lag advantage of the designed set over the best classical family (dB).
    pub fn margin_over_classical_db(&self) -> f64 {
        let designed = self.isolation[0].report.worst_db();
        let classical = self.isolation[1..].iter().map(|f| f.report.worst_db()).fold(f64::INFINITY, f64::min);
        classical - designed
    }
}

pub fn seq_design(config: &SeqDesignConfig) -> Result<SeqDesignResult> {
    let opts = DesignOptions { max_iters: config.max_iters, ..DesignOptions::default() };
    let designed = design_preamble(config.antennas, config.length, config.tau_max, opts, config.seed)?;
    let window = lag_window(config.tau_max);
    let families = [
        ("designed", designed.clone()),
        ("zadoff-chu", zc_set(config.antennas, config.length)?),
        ("walsh", walsh_set(config.antennas, config.length)?),
    ];
    let isolation = families
        .into_iter()
        .map(|(name, set)| FamilyIsolation { family: name.to_string(), report: isolation_report_window(&set, window) })
        .collect();
    Ok(SeqDesignResult { designed, isolation })
}
