//! Configuration, parallel replica runner, report output and experiment
//! commands on top of `propchaos-core`.

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod manifest;
pub mod output;
pub mod runner;
pub mod stats;
