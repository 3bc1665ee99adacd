//! Command-line front end for the `uvturb_core` channel simulator.
//!
//! Each command turns a [`config::ScenarioConfig`] into a
//! [`report::Report`]: a commented metadata header followed by CSV sections
//! that are ready for external plotting tools.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod config;
pub mod phase;
pub mod report;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;
use uvturb_core::ChannelError;

pub use config::{ConfigError, ScenarioConfig};
pub use report::Report;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Channel(#[from] ChannelError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Input(String),
}

impl CliError {
    /// 1 for invalid input or I/O, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Channel(
                ChannelError::NoAcceptedPaths | ChannelError::Normalization { .. } | ChannelError::GridOverflow { .. },
            ) => 2,
            _ => 1,
        }
    }
}
