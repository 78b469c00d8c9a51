//! Synthesis, training, inference and evaluation commands behind the
//! `derain` binary.

pub mod app;
pub mod commands;
pub mod config;
pub mod desk;
pub mod error;
pub mod train;

pub use error::{CliError, Result};
