//! Command-line front end for the dual-query attention workbench: dataset
//! generation, cross-query pretraining, training, evaluation, transfer
//! matrices, and attention dumps, each producing a self-describing run
//! directory with a resolved config and a file-hash manifest.

pub mod config;
pub mod exec;

pub use config::{parse_config, Config};
pub use exec::{error_class, execute, RunArgs, RunOutcome, Verb};
