pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{parse_config, RunConfig};
pub use error::CliError;
pub use run::{execute, run, run_file, Outcome, Overrides};
