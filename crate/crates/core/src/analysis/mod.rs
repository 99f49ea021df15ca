//! Feature-importance analyses: permutation test, ablation and the
//! top-versus-bottom (TopBot) distribution comparison.
//!
//! Score decomposition is deliberately absent: once features pass through a
//! ReLU layer there is no clean way to attribute a score to one input.

mod ablation;
mod ks;
mod permutation;
mod topbot;

pub use ablation::{ablation_run, AblationReport};
pub use ks::{ks_two_sample, KsResult};
pub use permutation::{
    permutation_importance, ImportanceReport, ImportanceRow, PermutationScope, CORRELATION_WARNING, DEFAULT_REPETITIONS,
};
pub use topbot::{topbot_report, TopBotFeature, TopBotReport, DEFAULT_TOPBOT_BINS, DEFAULT_TOPBOT_K};
