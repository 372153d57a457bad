//! Library half of the `exgame` binary, kept separate so the subcommands can
//! be driven from tests.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::run;
pub use config::Cli;
pub use error::CliError;
