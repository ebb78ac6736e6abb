//! Command-line front end of `cavmold`: configuration, scenario pipelines,
//! CSV/JSON output and plot rendering.

pub mod app;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod render;
pub mod selftest;

pub use error::{CliError, Result};
