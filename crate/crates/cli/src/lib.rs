//! Command-line interface and HTTP service for layoutgen.

pub mod commands;
pub mod http;
