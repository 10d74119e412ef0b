//! Adaptive modulation thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Approximate symbol error rate of square `order`-QAM at linear SINR `sinr`.
pub fn qam_ser(order: u32, sinr: f64) -> f64 {
    let q = order as f64;
    let per_axis = 2.0 * (1.0 - 1.0 / q.sqrt()) * q_function((3.0 * sinr / (q - 1.0)).sqrt());
    1.0 - (1.0 - per_axis).powi(2)
}

/// Smallest SINR (dB) at which `order`-QAM meets `target_ser`.
pub fn min_sinr_db(order: u32, target_ser: f64) -> f64 {
    let (mut lo, mut hi) = (-20.0f64, 80.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if qam_ser(order, 10f64.powf(mid / 10.0)) > target_ser {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationEntry {
    pub order: u32,
    pub min_sinr_db: f64,
    pub bits: u32,
}

/// Square-QAM levels with their SINR thresholds, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationTable {
    pub entries: Vec<ModulationEntry>,
    pub target_ser: f64,
}

impl ModulationTable {
    /// 4-QAM up to `max_order`-QAM at the given SER target.
    pub fn square_qam(max_order: u32, target_ser: f64) -> Result<Self> {
        if !(target_ser > 0.0 && target_ser < 1.0) {
            return Err(Error::InvalidParameter(format!("SER target {target_ser} outside (0, 1)")));
        }
        let entries: Vec<ModulationEntry> = (1..=16)
            .map(|k| 1u32 << (2 * k))
            .take_while(|&o| o <= max_order)
            .map(|order| ModulationEntry { order, min_sinr_db: min_sinr_db(order, target_ser), bits: order.trailing_zeros() })
            .collect();
        if entries.is_empty() {
            return Err(Error::InvalidParameter(format!("no square QAM up to order {max_order}")));
        }
        Ok(Self { entries, target_ser })
    }

    /// Highest-rate entry whose threshold is met, or `None` (stream dropped).
    pub fn select(&self, sinr_db: f64) -> Option<ModulationEntry> {
        self.entries.iter().rev().find(|e| e.min_sinr_db <= sinr_db).copied()
    }

    /// Bits of the largest constellation.
    pub fn cap_bits(&self) -> u32 {
        self.entries.last().map(|e| e.bits).unwrap_or(0)
    }
}

impl Default for ModulationTable {
    fn default() -> Self {
        Self::square_qam(4096, 1e-3).expect("default table")
    }
}

/// Per-stream levels chosen from per-stream SINR (dB).
pub fn adaptive_modulation(per_stream_sinr_db: &[f64], table: &ModulationTable) -> Vec<Option<ModulationEntry>> {
    per_stream_sinr_db.iter().map(|&s| table.select(s)).collect()
}
