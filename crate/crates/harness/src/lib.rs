//! Replicated experiments for the `miis-core` samplers: JSON configs, a worker
//! pool over (method, dataset, replication), MSE tables and the `miis` command.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod cli;
pub mod config;
pub mod oracle_check;
pub mod pilot;
pub mod run;
pub mod seeds;
pub mod setup;

pub use bundle::{ResultBundle, TableRow};
pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use run::{run_experiment, write_outputs};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] miis_core::Error),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}
