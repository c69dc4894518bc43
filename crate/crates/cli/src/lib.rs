//! Command-line front end: configuration, dispatch and output files.

pub mod app;
pub mod config;
