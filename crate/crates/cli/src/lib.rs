//! Pipeline orchestration behind the `rxpredict` binary: run configuration,
//! file formats, the subcommands and multi-seed aggregation.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

pub use commands::{
    cmd_analyze, cmd_build, cmd_eval, cmd_parse, cmd_report, cmd_synth, cmd_train, ModelInfo, RunOptions, Split,
};
pub use config::{ModelKind, RunConfig};
pub use error::CliError;
pub use manifest::{RunManifest, SeedReport, Summary};
