//! Algorithms and a link-level simulator for dual-polarized line-of-sight
//! MIMO backhaul links with per-antenna oscillators.

pub mod channel;
pub mod channel_est;
pub mod error;
pub mod experiments;
pub mod impairments;
pub mod linalg;
pub mod link_sim;
pub mod parallel;
pub mod phase_tracking;
pub mod precoding;
pub mod rng;
pub mod sequences;
pub mod timing_sync;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
