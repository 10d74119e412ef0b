//! End-to-end FDD link simulation.

pub mod baselines;
pub mod engine;
pub mod frame;
pub mod metrics;
pub mod modulation;
pub mod qam;
pub mod scenario;
pub mod setup;
pub mod synth;

pub use frame::{Block, BlockKind, FrameConfig};
pub use modulation::{adaptive_modulation, ModulationEntry, ModulationTable};
pub use qam::Qam;
pub use scenario::{ModulationPolicy, Scenario};
pub use setup::{Direction, Realization, SequenceBank};
pub use baselines::Method;
pub use engine::{simulate_method, MethodOutcome, TrialContext};
pub use metrics::{run_trial, summarize, MethodSummary, TrialReport};
