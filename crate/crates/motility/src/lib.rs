//! File formats, the experiment runner and the command line around
//! [`motility_core`].
//!
//! * [`csvio`]: recorded-data ingestion, the lossless canonical dataset
//!   layout, graph-point and plot exports.
//! * [`model`]: JSON model documents that reload bit for bit.
//! * [`config`]: the TOML run configuration.
//! * [`run`]: the `synth`, `fit`, `augment`, `predict` and `evaluate` stages.

pub mod cli;
pub mod config;
pub mod csvio;
mod error;
pub mod model;
pub mod run;

pub use error::{Error, Result};
pub use motility_core as core;
