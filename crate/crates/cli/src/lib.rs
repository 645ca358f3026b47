//! Benchmark and diagnostics front end for the `nysopt` library.
//!
//! The binary exposes three subcommands over flat TOML config files:
//! `run` sweeps an optimizer grid and writes per-run CSV traces plus a JSON
//! summary, `diagnose` sweeps Nystrom approximation quality over a column
//! grid, and `validate` checks a config without running anything. The same
//! machinery is exported here as a library so integration tests can drive
//! experiments in-process.

pub mod config;
pub mod diagnose;
pub mod experiment;
pub mod output;
