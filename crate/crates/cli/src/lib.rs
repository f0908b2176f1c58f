//! Experiment harness around `anchorlab`: config files, resumable sweeps,
//! paired comparisons, anchor-ranking analysis and transfer matrices.

pub mod analysis;
pub mod config;
pub mod store;
pub mod sweep;

pub use config::{ExperimentConfig, Job, Overrides};
pub use store::ResultStore;
