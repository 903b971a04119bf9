//! Command-line front end: TOML experiment configs, the runners behind
//! each subcommand, and the acceptance battery.

pub mod config;
pub mod runners;
pub mod validate;
