//! Files, configuration and the command line around `ftd-core`.

pub mod cli;
pub mod codec;
pub mod commands;
pub mod config;
pub mod csvio;
mod error;
pub mod idx;
pub mod manifest;

pub use error::{Error, Result};
pub use ftd_core;
