//! Command-line pipeline, terminal chat and HTTP chat service for the
//! prompt-controlled dialogue models.

pub mod config;
pub mod engine;
pub mod error;
pub mod pipeline;
pub mod repl;
pub mod server;

pub use error::{CliError, CliResult};
