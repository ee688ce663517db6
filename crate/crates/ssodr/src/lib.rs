//! File formats, pipeline orchestration and the `ssodr` command line for `ssodr-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;

pub use config::PipelineConfig;
pub use error::{AppError, Result};
