//! Library side of the `radonseis` binary: pipeline commands and the self-test.

pub mod commands;
pub mod selftest;

/// Package version plus `git describe` output when built from a checkout.
pub const VERSION: &str = env!("RADONSEIS_VERSION");
