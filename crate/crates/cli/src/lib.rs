//! The `chronoscrape` command line.

pub mod args;
pub mod commands;

pub use args::{normalize_args, Cli, Command, QueryFlags};
pub use commands::run;
