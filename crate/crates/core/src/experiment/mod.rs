//! Experiment drivers behind the `seqedit` command line.

pub mod analyze;
pub mod bound_check;
pub mod config;
pub mod run;

pub use analyze::cmd_analyze;
pub use bound_check::{cmd_bound_check, BoundCheckArgs};
pub use config::ExperimentConfig;
pub use run::cmd_run;
