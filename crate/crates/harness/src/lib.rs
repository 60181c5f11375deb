//! Evaluation harness for site-specific neural receiver finetuning.
//!
//! Builds frozen test sets from capture stores, measures dataset BLER with
//! Wilson intervals, sweeps receiver depth, finetuning progress and
//! effective SNR under noise injection, and drives the complete pipeline
//! from one configuration file.

pub mod bler;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod snr;
pub mod sweep;
pub mod testset;

pub use bler::{dataset_bler, load_test_slots, wilson_interval, BlerReport, ClassCount, TestSlot, Z95};
pub use config::RunConfig;
pub use error::HarnessError;
pub use pipeline::{run_pipeline, RunPaths};
pub use snr::{alpha_grid, effective_snr, inject_noise, snr_at_bler, snr_sweep, NoiseInjectionConfig, SnrPoint};
pub use sweep::{batch_sweep, depth_sweep};
pub use testset::{build_test_set, TestSet};
