//! Experiment drivers behind the command-line presets.

pub mod end_to_end;
pub mod phn;
pub mod precoder_grid;
pub mod seq_design;
pub mod timing;

pub use end_to_end::{end_to_end, run_end_to_end, EndToEndConfig, EndToEndResult, TrialFailure};
pub use phn::{phase_sweep, ErrorTally, PhaseMethod, PhaseRow, PhaseSweepConfig};
pub use precoder_grid::{log_grid, precoder_grid, PrecoderGridConfig, PrecoderGridRow};
pub use seq_design::{seq_design, FamilyIsolation, SeqDesignConfig, SeqDesignResult};
pub use timing::{timing_sweep, TimingMethod, TimingRow, TimingSweepConfig};
