//! Batch driver for the placelab pipeline: configuration, cached stage
//! execution, and a synthetic fixture generator for end-to-end runs.

pub mod artifacts;
pub mod cache;
pub mod config;
pub mod fixture;
pub mod pipeline;

pub use config::{validate, PipelineConfig, Problem};
pub use pipeline::{Pipeline, Stage};
