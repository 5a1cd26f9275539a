//! Experiment runner for the Easy-IIL desk lab.
//!
//! Configs, the JSONL episode log and its replay checker, checkpoints,
//! full experiment runs with JSON reports, standalone collection, the live
//! WebSocket session server and ratings analysis. The `easy-iil` binary is
//! a thin clap front end over these modules.

pub mod analyze;
pub mod checkpoint;
pub mod collect;
pub mod config;
pub mod error;
pub mod experiment;
pub mod log;
pub mod replay;
pub mod session;
pub mod train;

pub use config::{ExperimentConfig, Method};
pub use error::{CliError, Result};
