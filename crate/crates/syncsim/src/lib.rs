//! Experiment runner for `syncsim-core`: configuration files, result
//! emitters, cycle traces and the `syncsim` command line.

pub mod cli;
pub mod config_file;
pub mod orderings;
pub mod output;
pub mod trace;
