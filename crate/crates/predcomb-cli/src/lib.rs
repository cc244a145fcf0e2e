//! Support library for the `predcomb` binary: benchmark scenario runners and
//! run-manifest plumbing, kept as a library so integration tests can drive
//! the exact protocols the CLI uses.

pub mod manifest;
pub mod scenarios;
