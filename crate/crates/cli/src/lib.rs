//! Library side of the `tora-asd` command-line tool.

pub mod commands;
pub mod config;
pub mod output;
