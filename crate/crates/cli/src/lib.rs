//! Command-line front end for the `ramanmem` models.
//!
//! Exit codes: 0 on success, 1 when a computation fails (solver error, fit
//! without convergence), 2 for usage and input errors.

pub mod commands;
pub mod config;
pub mod table;


use thiserror::Error;

pub use commands::{run, Cli, Command};
pub use config::{Overrides, Resolved, RunConfig};
pub use table::{ingest_csv, Schema, Table};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("computation failed: {0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Compute(_) | CliError::Io(_) => 1,
            CliError::Usage(_) | CliError::Config(_) | CliError::Input(_) => 2,
        }
    }
}

impl From<ramanmem::Error> for CliError {
    fn from(e: ramanmem::Error) -> Self {
        use ramanmem::Error as E;
        match e {
            E::InvalidParameter { .. } | E::UnsupportedConversion { .. } | E::Shape(_) | E::Precondition(_) => {
                CliError::Input(e.to_string())
            }
            E::SingularDetuning(_) | E::Resolution { .. } | E::Domain(_) | E::FitDiverged(_) | E::FitDegenerate(_) => {
                CliError::Compute(e.to_string())
            }
        }
    }
}
