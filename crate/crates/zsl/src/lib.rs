//! File formats, configuration and the staged pipeline around `zsl-core`.

pub mod artifact;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use pipeline::{run_pipeline, RunOutput};
