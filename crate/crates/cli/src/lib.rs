//! Library side of the `hident` driver: configuration, subcommands and
//! their CSV/SVG artifacts.

pub mod commands;
pub mod config;
pub mod histogram;
pub mod svg;
pub mod trajectory_spec;
