//! Configuration, verification reports and the command dispatcher behind the binary.

pub mod bundled;
mod commands;
mod config;
mod error;
mod report;

pub use commands::{run_command, verify_all, Artifact, CommandKind, MethodChoice, Outcome, RunOptions};
pub use config::{parse_config, KPath, Ramp, RunConfig, Sweep, Tolerances};
pub use error::{CliError, ErrorCategory};
pub use report::{Check, Environment, Observation, Relation, SuiteReport, VerificationReport};
