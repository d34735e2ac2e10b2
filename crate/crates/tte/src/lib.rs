//! File formats, configuration and the command-line pipeline around
//! `tte-core`.

pub mod batch;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod exec;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod truth;

pub use config::RunConfig;
pub use error::{PipelineError, Result};
pub use exec::Threads;
