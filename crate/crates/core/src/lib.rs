//! Uncertainty-gated two-pass multiple-choice inference with its evaluation
//! stack: metrics, trigger policies, run logs, analysis and a simulator.

pub mod analysis;
pub mod dataset;
pub mod harness;
pub mod inference;
pub mod metrics;
pub mod policy;
pub mod runlog;
mod serde_float;
