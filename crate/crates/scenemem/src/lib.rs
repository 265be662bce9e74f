//! Std companion to `scenemem-core`: episode and snapshot formats, synthetic
//! worlds, feature providers, the ingest pipeline, evaluation and the CLI.

pub mod cli;
pub mod config;
pub mod episode;
pub mod eval;
pub mod pipeline;
pub mod provider;
pub mod shared;
pub mod snapshot;
pub mod synth;
