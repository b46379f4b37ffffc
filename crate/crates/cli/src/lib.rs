//! Command-line tool and HTTP service around `agqr-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod server;

pub use config::ServiceConfig;
pub use error::CliError;
