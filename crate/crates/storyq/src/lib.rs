//! Std side of storyq: corpus and model file formats, checkpoints, the
//! pipeline configuration and the commands behind the `storyq` binary.
//!
//! The algorithms live in [`storyq_core`], which needs only `alloc`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use commands::{run, Command, Options, TrainTarget};
pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
