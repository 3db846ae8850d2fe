//! File formats, run directories and the training pipeline on top of
//! `maskgan-core`.

pub mod config;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod lock;
pub mod manifest;
pub mod pipeline;
pub mod synth;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use pipeline::Run;
