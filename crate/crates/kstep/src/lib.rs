//! Simulation harness, file formats and command-line plumbing around the
//! `kstep-core` engines.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod report;

pub use config::{ExperimentConfig, InitializerConfig, Preset, SamplerSettings};
pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentOutcome, GroupResult, ReplicateReport};
