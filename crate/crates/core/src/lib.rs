//! Community success analytics for the 2017 r/place canvas.
//!
//! The crate replays the public placement log into canvas state, measures
//! each community's artwork, turns the measurements into success labels,
//! builds per-community feature matrices for the weeks before and the days
//! during the experiment, fits tree ensembles and linear baselines, evaluates
//! them under stratified cross-validation, and explains fitted ensembles with
//! exact Shapley values.

pub mod artwork;
pub mod canvas;
pub mod eval;
pub mod explain;
pub mod features;
pub mod ingest;
pub mod labels;
pub mod matrix;
pub mod models;
pub mod stats;
pub mod text;
pub mod window;
