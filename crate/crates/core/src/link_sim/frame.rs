//! Frame layout: preamble, then `N_sf` subframes of data, each subframe
//! after the first preceded by a pilot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub l_t: usize,
    pub l_p: usize,
    pub l_d: usize,
    pub n_sf: usize,
    pub symbol_time: f64,
    pub snr_db: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self { l_t: 256, l_p: 64, l_d: 1280, n_sf: 100, symbol_time: 40e-9, snr_db: 47.0 }
    }
}

/// What a block of symbols carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Preamble,
    /// Pilot opening subframe `subframe` (>= 1).
    Pilot { subframe: usize },
    /// Data block `block` of subframe `subframe`.
    Data { subframe: usize, block: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub start: usize,
    pub len: usize,
}

impl Block {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_t == 0 || self.l_d == 0 || self.n_sf == 0 {
            return Err(Error::InvalidParameter("frame sizes must be positive".into()));
        }
        if self.n_sf > 1 && self.l_p == 0 {
            return Err(Error::InvalidParameter("pilot length must be positive when N_sf > 1".into()));
        }
        Ok(())
    }

    /// `(L_t + (N_sf - 1) L_p) / (N_sf L_d)`.
    pub fn overhead(&self) -> f64 {
        (self.l_t + (self.n_sf - 1) * self.l_p) as f64 / (self.n_sf * self.l_d) as f64
    }

    pub fn total_symbols(&self) -> usize {
        self.l_t + self.n_sf * self.l_d + (self.n_sf - 1) * self.l_p
    }

    /// First symbol of the pilot opening subframe `q >= 1`.
    pub fn pilot_start(&self, q: usize) -> usize {
        self.l_t + self.l_d + (q - 1) * (self.l_p + self.l_d)
    }

    /// First symbol of the data part of subframe `q`.
    pub fn data_start(&self, q: usize) -> usize {
        if q == 0 { self.l_t } else { self.pilot_start(q) + self.l_p }
    }

    /// Blocks in transmission order, with each subframe's data split into
    /// `n_blocks` nearly equal blocks.
    pub fn blocks(&self, n_blocks: usize) -> Vec<Block> {
        let n_blocks = n_blocks.clamp(1, self.l_d);
        let mut out = vec![Block { kind: BlockKind::Preamble, start: 0, len: self.l_t }];
        for q in 0..self.n_sf {
            if q > 0 {
                out.push(Block { kind: BlockKind::Pilot { subframe: q }, start: self.pilot_start(q), len: self.l_p });
            }
            let start = self.data_start(q);
            for p in 0..n_blocks {
                let (a, b) = (p * self.l_d / n_blocks, (p + 1) * self.l_d / n_blocks);
                out.push(Block { kind: BlockKind::Data { subframe: q, block: p }, start: start + a, len: b - a });
            }
        }
        out
    }
}
