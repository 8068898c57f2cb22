//! Layer-wise probing of decoder-only transformer hidden states.
//!
//! The crate extracts residual-stream activations into an on-disk store,
//! pools token activations into sentence features, sweeps probe classifiers
//! over (layer, pooling, classifier) grids, and builds truncated models that
//! keep only the embedding and the blocks up to the selected layer with a
//! small classification head on top. Prompting baselines, dataset reduction
//! and efficiency benchmarks round out the comparison.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod extract;
pub mod fixtures;
mod io_util;
pub mod model;
pub mod pooling;
pub mod probe;
pub mod prompt;
pub mod surgeon;
pub mod sweep;
