//! Experiment configuration, orchestration and persistence on top of
//! `canopy-core`.
//!
//! A run takes one [`config::ExperimentConfig`], executes it on a rayon pool
//! and writes `<kind>.csv`, `<kind>_summary.json` and `manifest.json` (with
//! SHA-256 digests of every output) into the output directory. Outputs do not
//! depend on the worker count.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plots;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{LabError, LabResult};
pub use experiments::{run, RunManifest};
