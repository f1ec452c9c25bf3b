//! Command-line harness around the island particle-filter library:
//! configuration schema, CSV/sidecar artifact writers, and the experiment
//! runner behind the `islandpf` binary.

pub mod artifacts;
pub mod config;
pub mod runner;
