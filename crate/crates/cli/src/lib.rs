//! Command implementations behind the `mintood` binary.
//!
//! Every command is a plain function so it can be driven from tests as well
//! as from the argument parser in `main.rs`.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

pub use commands::{cmd_ablate, cmd_eval, cmd_report, cmd_synth, cmd_train, resolve_corpus};
pub use config::{Overrides, RunConfig, ScorerSelection};
pub use error::{CliError, Result};
pub use table::{aggregate, ordering_checks, Aggregate, OrderingCheck, RunRow};
